//! MSE / PSNR / fMSE on the 0–255 scale, ratio buckets and report tables.

mod report;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::imgcore::{Image, ImageError, Mask};

pub use report::{evaluate_pair, evaluate_set, Aggregate, BucketAggregate, EvalOptions, MetricsReport, EVAL_SIZE};

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP: f64 = 100.0;
const SCALE: f64 = 255.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid bucket edges `{0}`: {1}")]
    BadEdges(String, &'static str),
    #[error("foreground ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
}

fn sq_diff(a: &Image, b: &Image, index: usize) -> f64 {
    let (p, q) = (a.pixel(index), b.pixel(index));
    (0..3).map(|c| ((p[c] - q[c]) * SCALE).powi(2)).sum()
}

/// Mean squared difference over all H·W·3 entries, 0–255 scale.
pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    b.ensure_same_size(a.width(), a.height())?;
    let n = a.pixel_count();
    if n == 0 {
        return Err(ImageError::ZeroArea.into());
    }
    Ok((0..n).map(|i| sq_diff(a, b, i)).sum::<f64>() / (3 * n) as f64)
}

/// `10·log10(255² / mse)`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < SCALE * SCALE * 1e-10 {
        PSNR_CAP
    } else {
        (10.0 * (SCALE * SCALE / mse).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    mse(a, b).map(psnr_from_mse)
}

/// Mean squared difference over foreground pixels × 3 channels.
pub fn fmse(a: &Image, b: &Image, mask: &Mask) -> Result<f64, MetricsError> {
    b.ensure_same_size(a.width(), a.height())?;
    mask.ensure_matches(a)?;
    let n = mask.foreground_count();
    if n == 0 {
        return Err(ImageError::EmptyMask.into());
    }
    Ok(mask.foreground_indices().map(|i| sq_diff(a, b, i)).sum::<f64>() / (3 * n) as f64)
}

/// Ratio boundaries `0 = e_0 < e_1 < … < e_k = 1`.
///
/// Bucket `i` holds ratios in `[e_i, e_{i+1})`; the last bucket also holds 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketEdges(Vec<f64>);

impl Default for BucketEdges {
    fn default() -> Self {
        Self(vec![0.0, 0.05, 0.15, 1.0])
    }
}

impl BucketEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self, MetricsError> {
        let text = || edges.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        if edges.len() < 2 {
            return Err(MetricsError::BadEdges(text(), "need at least two edges"));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(MetricsError::BadEdges(text(), "must start at 0 and end at 1"));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MetricsError::BadEdges(text(), "must be strictly increasing"));
        }
        Ok(Self(edges))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bucket_of(&self, ratio: f64) -> Result<usize, MetricsError> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(MetricsError::RatioOutOfRange(ratio));
        }
        let upper = self.0[1..].partition_point(|&e| e <= ratio);
        Ok(upper.min(self.len() - 1))
    }

    /// Label such as `5%~15%`.
    pub fn label(&self, bucket: usize) -> String {
        let pct = |v: f64| {
            let p = v * 100.0;
            if (p - p.round()).abs() < 1e-9 { format!("{}%", p.round()) } else { format!("{p}%") }
        };
        format!("{}~{}", pct(self.0[bucket]), pct(self.0[bucket + 1]))
    }
}

impl fmt::Display for BucketEdges {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for BucketEdges {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let edges = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| MetricsError::BadEdges(s.to_string(), "not a comma-separated list of numbers"))?;
        Self::new(edges)
    }
}

/// Grouping tags carried by each evaluated pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTags {
    pub method: String,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePairEval {
    pub id: String,
    pub mse: f64,
    pub psnr: f64,
    pub fmse: f64,
    pub foreground_ratio: f64,
    pub tags: EvalTags,
}
