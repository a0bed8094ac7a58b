//! `harmonize` command line: synth, filter, eval, kernels-check, bt-fit, serve.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 usage error.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::btrank::{fit_bradley_terry, ComparisonMatrix, FitOptions};
use crate::config::RunConfig;
use crate::dove::check;
use crate::metrics::{evaluate_set, EvalOptions};
use crate::review::{apply_verdicts, load_duels, ReviewService, ServiceOptions};
use crate::synth::fixtures::{write_demo_sources, DemoSpec};
use crate::synth::{heuristic_filter, load_sources, synthesize, FilterConfig, Manifest, Split};

#[derive(Debug, Parser)]
#[command(name = "harmonize", version, about = "Harmonization dataset synthesis, evaluation and review")]
struct Cli {
    /// Dataset root used when a path flag is omitted.
    #[arg(long, global = true, env = "HARMONIZE_ROOT", default_value = ".")]
    root: PathBuf,
    /// key=value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-image stages (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate, filter and split composites.
    Synth(SynthArgs),
    /// Re-run automatic filters and apply review verdicts to a manifest.
    Filter(FilterArgs),
    /// Score candidate images against the real images of a manifest.
    Eval(EvalArgs),
    /// Run the domain-verification kernel checks.
    KernelsCheck,
    /// Fit Bradley-Terry scores from exported comparisons.
    BtFit(BtArgs),
    /// Start the review HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Source records (JSONL). Defaults to <root>/sources/sources.jsonl.
    #[arg(long)]
    sources: Option<PathBuf>,
    /// Write procedural demo sources to <out>/sources first.
    #[arg(long)]
    demo: bool,
    /// Output dataset directory. Defaults to <root>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    composites_per_target: Option<usize>,
    #[arg(long)]
    split_fraction: Option<f64>,
    #[arg(long)]
    ratio_min: Option<f64>,
    #[arg(long)]
    ratio_max: Option<f64>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Defaults to <root>/manifest.jsonl.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Review event log whose verdicts are applied.
    #[arg(long)]
    review_log: Option<PathBuf>,
    /// Defaults to manifest.filtered.jsonl next to the input.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    hue_threshold_deg: Option<f64>,
    #[arg(long)]
    clip_threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Defaults to <root>/manifest.jsonl.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory holding <id>.png or <real_id>.png candidates.
    #[arg(long)]
    candidates: PathBuf,
    /// Report directory. Defaults to <manifest dir>/eval.
    #[arg(long)]
    out: Option<PathBuf>,
    /// test, train or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Comma-separated ratio edges, e.g. 0,0.05,0.15,1.
    #[arg(long)]
    bucket_edges: Option<String>,
    /// Row label; inferred from the candidate directory when omitted.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Debug, Args)]
struct BtArgs {
    /// CSV of method_a,method_b,winner lines.
    #[arg(long)]
    comparisons: PathBuf,
    /// Scores JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Event log. Defaults to <root>/review/events.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Enqueue this manifest's records for triage.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Duel groups (JSONL) to register.
    #[arg(long)]
    duels: Option<PathBuf>,
    /// Comparisons per method pair when a duel line omits it.
    #[arg(long, default_value_t = 25)]
    replicates: u32,
}

/// Error printed as `error: <category>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

macro_rules! categorize {
    ($($ty:ty => $cat:literal),* $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self { category: $cat, message: e.to_string() }
            }
        }
    )*};
}

categorize! {
    crate::config::ConfigError => "config",
    crate::synth::SynthError => "dataset",
    crate::metrics::MetricsError => "metrics",
    crate::dove::DoveError => "kernels",
    crate::btrank::BtError => "ranking",
    crate::review::ReviewError => "review",
    std::io::Error => "io",
}

fn fail(category: &'static str, message: impl Into<String>) -> CliError {
    CliError { category, message: message.into() }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut set = |k: &str, v: Option<String>| -> Result<(), CliError> {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
        Ok(())
    };
    set("seed", cli.seed.map(|v| v.to_string()))?;
    set("workers", cli.workers.map(|v| v.to_string()))?;
    match &cli.command {
        Command::Synth(a) => {
            set("composites_per_target", a.composites_per_target.map(|v| v.to_string()))?;
            set("split_fraction", a.split_fraction.map(|v| v.to_string()))?;
            set("ratio_min", a.ratio_min.map(|v| v.to_string()))?;
            set("ratio_max", a.ratio_max.map(|v| v.to_string()))?;
        }
        Command::Filter(a) => {
            set("hue_threshold_deg", a.hue_threshold_deg.map(|v| v.to_string()))?;
            set("clip_threshold", a.clip_threshold.map(|v| v.to_string()))?;
        }
        Command::Eval(a) => set("bucket_edges", a.bucket_edges.clone())?,
        Command::BtFit(a) => {
            set("bt_max_iters", a.max_iters.map(|v| v.to_string()))?;
            set("bt_tol", a.tol.map(|v| v.to_string()))?;
        }
        Command::KernelsCheck | Command::Serve(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".config");
    PathBuf::from(s)
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let dest = a.out.clone().unwrap_or_else(|| cli.root.clone());
    let sources = if a.demo {
        let dir = dest.join("sources");
        writeln!(err, "writing demo sources to {}", dir.display())?;
        write_demo_sources(&dir, &DemoSpec { seed: cfg.seed, ..DemoSpec::default() })?
    } else {
        let path = a.sources.clone().unwrap_or_else(|| cli.root.join("sources/sources.jsonl"));
        load_sources(&path)?
    };
    writeln!(err, "synthesizing from {} sources into {}", sources.len(), dest.display())?;
    let summary = synthesize(&sources, &dest, cfg)?;
    for w in &summary.warnings {
        writeln!(err, "warning: {w}")?;
    }
    writeln!(
        out,
        "{}",
        serde_json::json!({
            "sources": summary.sources,
            "excluded_sources": summary.excluded_sources,
            "generated": summary.generated,
            "rejected": summary.rejected,
            "train": summary.train,
            "test": summary.test,
            "manifest": dest.join("manifest.jsonl"),
        })
    )?;
    Ok(())
}

fn cmd_filter(cli: &Cli, a: &FilterArgs, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let path = a.manifest.clone().unwrap_or_else(|| cli.root.join("manifest.jsonl"));
    let root = manifest_root(&path);
    let manifest = Manifest::load(&path)?;
    let fcfg = FilterConfig::from(cfg);
    writeln!(err, "re-filtering {} records", manifest.entries.len())?;
    let pool = crate::synth::thread_pool(cfg.workers);
    let verdicts: Vec<_> = pool.install(|| {
        manifest.entries.par_iter().map(|e| heuristic_filter(&e.record, &root, &fcfg)).collect::<Result<Vec<_>, _>>()
    })?;
    let mut filtered = manifest.clone();
    for (e, v) in filtered.entries.iter_mut().zip(verdicts) {
        e.record.filter_verdicts = v;
    }
    filtered.entries.retain(|e| e.record.passed_filters());
    let automatic = filtered.entries.len();
    if let Some(log) = &a.review_log {
        let svc = ReviewService::open(log, &root, ServiceOptions::default())?;
        filtered = apply_verdicts(&filtered, &svc.state());
    }
    filtered.config = cfg.snapshot();
    let dest = a.out.clone().unwrap_or_else(|| root.join("manifest.filtered.jsonl"));
    filtered.write(&dest)?;
    writeln!(
        out,
        "{}",
        serde_json::json!({
            "input": manifest.entries.len(),
            "passed_automatic": automatic,
            "kept": filtered.entries.len(),
            "manifest": dest,
        })
    )?;
    Ok(())
}

fn infer_label(candidates: &Path, root: &Path) -> String {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    let c = canon(candidates);
    if c.is_some() && c == canon(&root.join("composite")) {
        "Input composite".into()
    } else if c.is_some() && c == canon(&root.join("real")) {
        "Ground truth".into()
    } else {
        candidates.file_name().map_or_else(|| candidates.display().to_string(), |n| n.to_string_lossy().into_owned())
    }
}

fn cmd_eval(cli: &Cli, a: &EvalArgs, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let path = a.manifest.clone().unwrap_or_else(|| cli.root.join("manifest.jsonl"));
    let root = manifest_root(&path);
    let manifest = Manifest::load(&path)?;
    let split = match a.split.as_str() {
        "test" => Some(Split::Test),
        "train" => Some(Split::Train),
        "all" => None,
        other => return Err(fail("config", format!("--split must be test, train or all, got `{other}`"))),
    };
    if !a.candidates.is_dir() {
        return Err(fail("io", format!("candidate directory {} not found", a.candidates.display())));
    }
    let opts = EvalOptions {
        label: a.label.clone().unwrap_or_else(|| infer_label(&a.candidates, &root)),
        edges: cfg.bucket_edges.clone(),
        split,
    };
    writeln!(err, "evaluating {} against {}", a.candidates.display(), path.display())?;
    let pool = crate::synth::thread_pool(cfg.workers);
    let report = pool.install(|| evaluate_set(&manifest, &root, &a.candidates, &opts))?;
    if !report.skipped.is_empty() {
        writeln!(err, "warning: {} records had no candidate image", report.skipped.len())?;
    }
    let dest = a.out.clone().unwrap_or_else(|| root.join("eval"));
    report.write(&dest)?;
    write_text(&dest.join("eval.config"), &cfg.snapshot())?;
    write!(out, "{}", report.to_table())?;
    Ok(())
}

fn cmd_kernels(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let outcomes = check::run_suite(cfg.seed);
    for o in &outcomes {
        writeln!(out, "{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail)?;
    }
    let max = check::gradient_report(cfg.seed)?.iter().map(|(_, _, r)| r.max_rel_error).fold(0.0, f64::max);
    writeln!(out, "max finite-difference relative error: {max:.3e}")?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(fail("kernels", format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn cmd_bt(a: &BtArgs, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let m = ComparisonMatrix::load_csv(&a.comparisons)?;
    writeln!(err, "fitting {} comparisons over {} methods", m.total(), m.methods().len())?;
    let scores = fit_bradley_terry(&m, FitOptions { max_iters: cfg.bt_max_iters, tol: cfg.bt_tol })?;
    if !scores.smoothed.is_empty() {
        writeln!(err, "note: pseudo-counts added for {}", scores.smoothed.join(", "))?;
    }
    if let Some(p) = &a.out {
        scores.write_json(p)?;
        write_text(&config_path(p), &cfg.snapshot())?;
    }
    write!(out, "{}", scores.to_table())?;
    Ok(())
}

fn cmd_serve(cli: &Cli, a: &ServeArgs, cfg: &RunConfig, err: &mut dyn Write) -> Result<(), CliError> {
    let log = a.log.clone().unwrap_or_else(|| cli.root.join("review/events.jsonl"));
    let svc = ReviewService::open(&log, &cli.root, ServiceOptions { seed: cfg.seed })?;
    if let Some(m) = &a.manifest {
        let added = svc.enqueue_from_manifest(&Manifest::load(m)?)?;
        writeln!(err, "enqueued {added} new items")?;
    }
    if let Some(d) = &a.duels {
        let groups = load_duels(d, a.replicates)?;
        let mut added = 0;
        for g in groups {
            added += svc.register_duel(g)? as usize;
        }
        writeln!(err, "registered {added} new duel groups")?;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::review::serve(a.addr, Arc::new(svc)))?;
    Ok(())
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a, &cfg, out, err),
        Command::Filter(a) => cmd_filter(cli, a, &cfg, out, err),
        Command::Eval(a) => cmd_eval(cli, a, &cfg, out, err),
        Command::KernelsCheck => cmd_kernels(&cfg, out),
        Command::BtFit(a) => cmd_bt(a, &cfg, out, err),
        Command::Serve(a) => cmd_serve(cli, a, &cfg, err),
    }
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {}", e.category, e.message);
            1
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
