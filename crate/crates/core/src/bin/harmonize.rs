fn main() {
    std::process::exit(harmonize::cli::run(std::env::args_os()));
}
