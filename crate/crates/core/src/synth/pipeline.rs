use std::path::Path;

use rayon::prelude::*;

use super::{
    build_manifest, filter::heuristic_filter, generate_composite, io_err, mask_rel_path, real_rel_path, select_reference,
    CompositeMode, CompositeRecord, FilterConfig, Manifest, SourceRecord, SynthError,
};
use crate::config::RunConfig;
use crate::imgcore::{foreground_ratio, read_image, read_mask, write_image, write_mask};
use crate::seed::derive_seed;
use crate::transfer::TransferDefaults;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthSummary {
    pub sources: usize,
    /// Sources whose foreground ratio falls outside the configured bounds.
    pub excluded_sources: Vec<String>,
    pub generated: usize,
    pub rejected: usize,
    pub train: usize,
    pub test: usize,
    pub warnings: Vec<String>,
}

const SNAPSHOT_NOTES: &str = "# statistics: computed on the stored 8-bit encoding, foreground regions only\n\
# filters: ratio_bounds, hue_shift, clipping (learned filters replaced by heuristics + manual review)\n";

pub(crate) fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

/// Generate, filter and split composites for every eligible source.
///
/// Writes the dataset layout under `root` and returns a summary. Output is a
/// function of `(sources, cfg)` only: records are merged in id order and each
/// one draws from its own derived seed.
pub fn synthesize(sources: &[SourceRecord], root: &Path, cfg: &RunConfig) -> Result<SynthSummary, SynthError> {
    let pool = thread_pool(cfg.workers);
    pool.install(|| synthesize_inner(sources, root, cfg))
}

fn synthesize_inner(sources: &[SourceRecord], root: &Path, cfg: &RunConfig) -> Result<SynthSummary, SynthError> {
    let mut summary = SynthSummary { sources: sources.len(), ..Default::default() };
    std::fs::create_dir_all(root).map_err(io_err(root))?;

    let mut sorted: Vec<SourceRecord> = sources.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    // Copy reals and masks into the layout; drop sources outside the ratio bounds.
    let checked: Vec<Result<Option<SourceRecord>, SynthError>> = sorted
        .par_iter()
        .map(|s| {
            let mask = read_mask(&s.mask_path)?;
            let ratio = foreground_ratio(&mask)?;
            if !(ratio > cfg.ratio_min && ratio < cfg.ratio_max) {
                return Ok(None);
            }
            let img = read_image(&s.image_path)?;
            mask.ensure_matches(&img)?;
            write_image(root.join(real_rel_path(&s.id)), &img)?;
            write_mask(root.join(mask_rel_path(&s.id)), &mask)?;
            Ok(Some(s.clone()))
        })
        .collect();
    let mut eligible = Vec::new();
    for (s, r) in sorted.iter().zip(checked) {
        match r? {
            Some(s) => eligible.push(s),
            None => summary.excluded_sources.push(s.id.clone()),
        }
    }

    let jobs: Vec<(String, &SourceRecord)> = eligible
        .iter()
        .flat_map(|t| (0..cfg.composites_per_target).map(move |k| (format!("{}_{k}", t.id), t)))
        .collect();
    let defaults = TransferDefaults { bins: cfg.fecker_bins, pitie_iters: cfg.pitie_iters };
    let filter_cfg = FilterConfig::from(cfg);

    let results: Vec<Result<CompositeRecord, SynthError>> = jobs
        .par_iter()
        .map(|(id, target)| {
            let seed = derive_seed(cfg.seed, id);
            let reference = select_reference(&eligible, target, seed)?;
            let mode = CompositeMode::for_target(target);
            let (mut record, _) = generate_composite(root, id, target, reference, mode, seed, defaults)?;
            record.filter_verdicts = heuristic_filter(&record, root, &filter_cfg)?;
            Ok(record)
        })
        .collect();

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for ((id, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) if rec.passed_filters() => kept.push(rec),
            Ok(rec) => rejected.push(rec),
            Err(e @ SynthError::NoCandidate(_)) | Err(e @ SynthError::NotAligned(_)) => {
                summary.warnings.push(format!("{id}: {e}"))
            }
            Err(e) => return Err(e),
        }
    }
    summary.generated = kept.len() + rejected.len();
    summary.rejected = rejected.len();

    let rejected_path = root.join("rejected.jsonl");
    let mut text = String::new();
    for r in &rejected {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    std::fs::write(&rejected_path, text).map_err(io_err(&rejected_path))?;

    let mut manifest = if kept.is_empty() {
        summary.warnings.push("no composite passed the filters".into());
        Manifest::default()
    } else {
        build_manifest(kept, cfg.split_fraction, cfg.seed)?
    };
    manifest.config = format!("{SNAPSHOT_NOTES}{}", cfg.snapshot());
    manifest.write(root.join("manifest.jsonl"))?;
    summary.train = manifest.split(super::Split::Train).count();
    summary.test = manifest.split(super::Split::Test).count();
    Ok(summary)
}
