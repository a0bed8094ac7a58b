//! Triage and pairwise-comparison review, driven in-process.
//!
//!     cargo run --example review_service            # scripted session
//!     cargo run --example review_service -- --serve # then browse the API
//!
//! The scripted run enqueues a synthesized dataset, files verdicts, runs
//! duels, exports comparisons and fits scores. Restarting from the same
//! event log reproduces the state.

use std::collections::BTreeMap;
use std::sync::Arc;

use harmonize::btrank::{fit_bradley_terry, FitOptions};
use harmonize::config::RunConfig;
use harmonize::review::{apply_verdicts, DuelGroup, ReviewService, ServiceOptions, Side};
use harmonize::synth::fixtures::{write_demo_sources, DemoSpec};
use harmonize::synth::{synthesize, HumanVerdict, Manifest, RejectReason};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let sources = write_demo_sources(&root.join("sources"), &DemoSpec::default())?;
    synthesize(&sources, root, &RunConfig::default())?;
    let manifest = Manifest::load(root.join("manifest.jsonl"))?;

    let log = root.join("review/events.jsonl");
    let svc = ReviewService::open(&log, root, ServiceOptions { seed: 1 })?;
    println!("enqueued {} items", svc.enqueue_from_manifest(&manifest)?);

    let rater = svc.mint_session()?;
    for k in 0..6 {
        let item = svc.next_review(&rater)?;
        let verdict = if k % 3 == 2 { HumanVerdict::Reject { reason: RejectReason::HueChange } } else { HumanVerdict::Accept };
        svc.submit_verdict(&item.item_id, verdict)?;
    }
    let kept = apply_verdicts(&manifest, &svc.state());
    println!("after triage: {} of {} records kept", kept.entries.len(), manifest.entries.len());

    // Stand-in "methods": files already on disk for one record.
    let rec = manifest.records().next().expect("non-empty manifest");
    let outputs = BTreeMap::from([
        ("composite".to_string(), rec.composite_path.clone()),
        ("ground_truth".to_string(), rec.real_path.clone()),
        ("mask".to_string(), rec.mask_path.clone()),
    ]);
    svc.register_duel(DuelGroup { duel_id: rec.id.clone(), outputs, replicates: 4 })?;
    for _ in 0..4 {
        let s = svc.mint_session()?;
        while let Ok(task) = svc.next_comparison(&s) {
            // Raters here always prefer whatever is on the left.
            svc.submit_comparison(&s, &task.task_id, Side::Left)?;
        }
    }
    let csv = svc.export_csv()?;
    println!("exported {} comparisons", csv.lines().count() - 1);
    let scores = fit_bradley_terry(&svc.comparison_matrix()?, FitOptions::default())?;
    print!("{}", scores.to_table());

    let before = svc.state();
    drop(svc);
    let svc = ReviewService::open(&log, root, ServiceOptions { seed: 1 })?;
    println!("replayed state identical: {}", svc.state() == before);

    if std::env::args().any(|a| a == "--serve") {
        let addr = "127.0.0.1:8080".parse()?;
        tokio::runtime::Runtime::new()?.block_on(harmonize::review::serve(addr, Arc::new(svc)))?;
    }
    Ok(())
}
