//! Score composites against their real images, overall and per ratio bucket.
//!
//!     cargo run --example evaluate_metrics

use harmonize::config::RunConfig;
use harmonize::metrics::{evaluate_set, mse, psnr_from_mse, EvalOptions};
use harmonize::synth::fixtures::{write_demo_sources, DemoSpec};
use harmonize::synth::{synthesize, Manifest};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let sources = write_demo_sources(&dir.path().join("sources"), &DemoSpec::default())?;
    synthesize(&sources, dir.path(), &RunConfig { seed: 1, ..RunConfig::default() })?;
    let manifest = Manifest::load(dir.path().join("manifest.jsonl"))?;

    // Rows of a results table: unmodified composites, then the ground truth itself.
    let opts = EvalOptions { split: None, ..EvalOptions::default() };
    let composites = evaluate_set(&manifest, dir.path(), &dir.path().join("composite"), &opts)?;
    print!("{}", composites.to_table());
    let truth = EvalOptions { label: "Ground truth".into(), ..opts };
    let real = evaluate_set(&manifest, dir.path(), &dir.path().join("real"), &truth)?;
    println!();
    print!("{}", real.to_table());

    let black = harmonize::imgcore::Image::filled(2, 2, [0.0; 3]);
    let white = harmonize::imgcore::Image::filled(2, 2, [1.0; 3]);
    println!("\nmse(black, white) = {}", mse(&black, &white)?);
    println!("psnr at mse 172.47 = {:.2} dB", psnr_from_mse(172.47));
    Ok(())
}
