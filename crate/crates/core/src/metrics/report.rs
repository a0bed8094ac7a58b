use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmse, mse, psnr_from_mse, BucketEdges, EvalTags, ImagePairEval, MetricsError};
use crate::imgcore::{foreground_ratio, read_image, read_mask, resize_bilinear, resize_mask_nearest, Image, Mask};
use crate::synth::{CompositeRecord, Manifest, Split};

/// Side length images are resized to before scoring.
pub const EVAL_SIZE: usize = 256;

/// Means over a group; `None` when the group is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub count: usize,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
    pub fmse: Option<f64>,
}

impl Aggregate {
    fn of<'a>(label: impl Into<String>, evals: impl IntoIterator<Item = &'a ImagePairEval>) -> Self {
        let (mut n, mut m, mut p, mut f) = (0usize, 0.0, 0.0, 0.0);
        for e in evals {
            n += 1;
            m += e.mse;
            p += e.psnr;
            f += e.fmse;
        }
        let mean = |s: f64| (n > 0).then(|| s / n as f64);
        Self { label: label.into(), count: n, mse: mean(m), psnr: mean(p), fmse: mean(f) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAggregate {
    pub lower: f64,
    pub upper: f64,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    /// Sorted by id.
    pub per_image: Vec<ImagePairEval>,
    pub overall: Aggregate,
    pub buckets: Vec<BucketAggregate>,
    pub by_method: Vec<Aggregate>,
    pub by_category: Vec<Aggregate>,
    pub by_sub_dataset: Vec<Aggregate>,
    pub bucket_edges: Vec<f64>,
    /// Records without a candidate image.
    pub skipped: Vec<String>,
}

fn group_by(evals: &[ImagePairEval], key: impl Fn(&ImagePairEval) -> Option<&str>) -> Vec<Aggregate> {
    let mut groups: BTreeMap<&str, Vec<&ImagePairEval>> = BTreeMap::new();
    for e in evals {
        if let Some(k) = key(e) {
            groups.entry(k).or_default().push(e);
        }
    }
    groups.into_iter().map(|(k, v)| Aggregate::of(k, v)).collect()
}

impl MetricsReport {
    /// Aggregate per-image results. Input order does not matter.
    pub fn build(label: impl Into<String>, mut evals: Vec<ImagePairEval>, edges: &BucketEdges) -> Result<Self, MetricsError> {
        evals.sort_by(|a, b| a.id.cmp(&b.id));
        let mut per_bucket: Vec<Vec<&ImagePairEval>> = vec![Vec::new(); edges.len()];
        for e in &evals {
            per_bucket[edges.bucket_of(e.foreground_ratio)?].push(e);
        }
        let s = edges.as_slice();
        let buckets = per_bucket
            .into_iter()
            .enumerate()
            .map(|(i, v)| BucketAggregate { lower: s[i], upper: s[i + 1], aggregate: Aggregate::of(edges.label(i), v) })
            .collect();
        Ok(Self {
            label: label.into(),
            overall: Aggregate::of("All", &evals),
            buckets,
            by_method: group_by(&evals, |e| Some(e.tags.method.as_str())),
            by_category: group_by(&evals, |e| Some(e.tags.category.as_str())),
            by_sub_dataset: group_by(&evals, |e| e.tags.sub_dataset.as_deref()),
            bucket_edges: s.to_vec(),
            per_image: evals,
            skipped: Vec::new(),
        })
    }

    /// Fixed-width table: overall, ratio buckets, then per-tag rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.label);
        let _ = writeln!(out, "{:<24} {:>6} {:>10} {:>8} {:>10}", "group", "n", "MSE", "PSNR", "fMSE");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut row = |prefix: &str, a: &Aggregate| {
            let name = if prefix.is_empty() { a.label.clone() } else { format!("{prefix}:{}", a.label) };
            let _ = writeln!(out, "{:<24} {:>6} {:>10} {:>8} {:>10}", name, a.count, opt(a.mse), opt(a.psnr), opt(a.fmse));
        };
        row("", &self.overall);
        for b in &self.buckets {
            row("ratio", &b.aggregate);
        }
        for a in &self.by_sub_dataset {
            row("subset", a);
        }
        for a in &self.by_method {
            row("method", a);
        }
        for a in &self.by_category {
            row("category", a);
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped (no candidate): {}", self.skipped.len());
        }
        out
    }

    /// One JSON object per line: per-image rows then aggregate rows.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Line<'a> {
            Image(&'a ImagePairEval),
            Aggregate { group: &'a str, #[serde(flatten)] aggregate: &'a Aggregate },
        }
        let mut lines: Vec<Line> = self.per_image.iter().map(Line::Image).collect();
        lines.push(Line::Aggregate { group: "overall", aggregate: &self.overall });
        lines.extend(self.buckets.iter().map(|b| Line::Aggregate { group: "ratio", aggregate: &b.aggregate }));
        lines.extend(self.by_sub_dataset.iter().map(|a| Line::Aggregate { group: "sub_dataset", aggregate: a }));
        lines.extend(self.by_method.iter().map(|a| Line::Aggregate { group: "method", aggregate: a }));
        lines.extend(self.by_category.iter().map(|a| Line::Aggregate { group: "category", aggregate: a }));
        lines.iter().map(|l| serde_json::to_string(l).expect("serializable") + "\n").collect()
    }

    pub fn buckets_csv(&self) -> String {
        let mut out = String::from("bucket,lower,upper,count,mse,psnr,fmse\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
        for b in &self.buckets {
            let a = &b.aggregate;
            let _ = writeln!(out, "{},{},{},{},{},{},{}", a.label, b.lower, b.upper, a.count, opt(a.mse), opt(a.psnr), opt(a.fmse));
        }
        out
    }

    /// Write `report.jsonl` and `buckets.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), MetricsError> {
        let io = |path: PathBuf| move |source| MetricsError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let p = dir.join("report.jsonl");
        std::fs::write(&p, self.to_jsonl()).map_err(io(p.clone()))?;
        let p = dir.join("buckets.csv");
        std::fs::write(&p, self.buckets_csv()).map_err(io(p.clone()))?;
        Ok(())
    }
}

fn prepare(img: &Image) -> Image {
    if img.width() == EVAL_SIZE && img.height() == EVAL_SIZE {
        img.quantized()
    } else {
        resize_bilinear(img, EVAL_SIZE, EVAL_SIZE).quantized()
    }
}

/// Score one candidate against its real image at 256×256.
///
/// The ratio is taken from the mask at its stored resolution.
pub fn evaluate_pair(candidate: &Image, real: &Image, mask: &Mask) -> Result<(f64, f64, f64, f64), MetricsError> {
    candidate.ensure_same_size(real.width(), real.height())?;
    mask.ensure_matches(real)?;
    let ratio = foreground_ratio(mask)?;
    let (c, r) = (prepare(candidate), prepare(real));
    let m = resize_mask_nearest(mask, EVAL_SIZE, EVAL_SIZE);
    let e = mse(&c, &r)?;
    Ok((e, psnr_from_mse(e), fmse(&c, &r, &m)?, ratio))
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub label: String,
    pub edges: BucketEdges,
    /// Split to evaluate; `None` evaluates every record.
    pub split: Option<Split>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { label: "Input composite".into(), edges: BucketEdges::default(), split: Some(Split::Test) }
    }
}

fn candidate_path(dir: &Path, rec: &CompositeRecord) -> Option<PathBuf> {
    [&rec.id, &rec.real_id]
        .into_iter()
        .map(|name| dir.join(format!("{name}.png")))
        .find(|p| p.is_file())
}

/// Evaluate candidates in `candidate_dir` against the manifest under `root`.
///
/// Candidates are looked up as `<id>.png`, then `<real_id>.png`; records
/// without one are listed in `skipped`.
pub fn evaluate_set(manifest: &Manifest, root: &Path, candidate_dir: &Path, opts: &EvalOptions) -> Result<MetricsReport, MetricsError> {
    let records: Vec<&CompositeRecord> = match opts.split {
        Some(s) => manifest.split(s).collect(),
        None => manifest.records().collect(),
    };
    let results: Vec<Result<Option<ImagePairEval>, MetricsError>> = records
        .par_iter()
        .map(|rec| {
            let Some(path) = candidate_path(candidate_dir, rec) else { return Ok(None) };
            let candidate = read_image(path)?;
            let real = read_image(root.join(&rec.real_path))?;
            let mask = read_mask(root.join(&rec.mask_path))?;
            let (mse, psnr, fmse, foreground_ratio) = evaluate_pair(&candidate, &real, &mask)?;
            Ok(Some(ImagePairEval {
                id: rec.id.clone(),
                mse,
                psnr,
                fmse,
                foreground_ratio,
                tags: EvalTags {
                    method: rec.method.to_string(),
                    category: rec.category.clone(),
                    sub_dataset: rec.sub_dataset.clone(),
                },
            }))
        })
        .collect();
    let mut evals = Vec::new();
    let mut skipped = Vec::new();
    for (rec, r) in records.iter().zip(results) {
        match r? {
            Some(e) => evals.push(e),
            None => skipped.push(rec.id.clone()),
        }
    }
    let mut report = MetricsReport::build(opts.label.clone(), evals, &opts.edges)?;
    report.skipped = skipped;
    Ok(report)
}
