//! Build a small composite dataset from procedural sources.
//!
//!     cargo run --example synthesize_dataset [-- OUT_DIR]
//!
//! Transfer-mode sources get recolored foregrounds; aligned scenes get
//! foregrounds swapped in from another capture of the same scene.

use harmonize::config::RunConfig;
use harmonize::synth::fixtures::{write_demo_sources, DemoSpec};
use harmonize::synth::{synthesize, Manifest, Split};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("harmonize-demo"), Into::into);
    let sources = write_demo_sources(&out.join("sources"), &DemoSpec { transfer_targets: 12, ..DemoSpec::default() })?;

    let cfg = RunConfig { seed: 2024, composites_per_target: 3, ..RunConfig::default() };
    let summary = synthesize(&sources, &out, &cfg)?;
    println!("{} sources -> {} composites, {} rejected by filters", summary.sources, summary.generated, summary.rejected);
    println!("train {} / test {}", summary.train, summary.test);

    let manifest = Manifest::load(out.join("manifest.jsonl"))?;
    for rec in manifest.split(Split::Test).take(5) {
        let scores: Vec<String> = rec.filter_verdicts.iter().map(|v| format!("{}={:.3}", v.filter_name, v.score)).collect();
        println!("  {:<10} {:<13} ref {:<6} {}", rec.id, rec.method.as_str(), rec.reference_id, scores.join(" "));
    }
    println!("dataset at {}", out.display());
    Ok(())
}
