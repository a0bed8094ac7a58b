//! Composite generation, automatic filtering and manifest assembly.
//!
//! On-disk layout under a dataset root:
//!
//! ```text
//! <root>/real/<real_id>.png
//! <root>/mask/<real_id>.png
//! <root>/composite/<composite_id>.png
//! <root>/manifest.jsonl        one ManifestEntry per line
//! <root>/manifest.config       key=value snapshot of the run configuration
//! ```
//!
//! Paths stored in records are relative to the root.

pub mod fixtures;
mod filter;
mod generate;
mod manifest;
mod pipeline;
mod select;

pub use filter::{circular_mean_hue, heuristic_filter, FilterConfig, CLIP_FILTER, HUE_FILTER, RATIO_FILTER};
pub use generate::{generate_composite, CompositeMode};
pub use manifest::{build_manifest, Manifest, ManifestEntry, Split};
pub use pipeline::{synthesize, SynthSummary};
pub(crate) use pipeline::thread_pool;
pub use select::select_reference;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgcore::ImageError;
use crate::transfer::{MethodTag, TransferError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("no reference candidate for {0}")]
    NoCandidate(String),
    #[error("overlay needs pixel-aligned captures of one scene: {0}")]
    NotAligned(String),
    #[error("empty record set")]
    Empty,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.display().to_string(), source }
}

/// One real image with its foreground annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub category_label: String,
    /// Grouping key for pixel-aligned captures of one scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_dataset: Option<String>,
}

/// Read a `sources.jsonl` file. Relative paths resolve against the file's directory.
pub fn load_sources(path: impl AsRef<Path>) -> Result<Vec<SourceRecord>, SynthError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: SourceRecord = serde_json::from_str(line).map_err(|e| SynthError::Parse {
            path: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        rec.image_path = base.join(&rec.image_path);
        rec.mask_path = base.join(&rec.mask_path);
        out.push(rec);
    }
    Ok(out)
}

pub fn write_sources(path: impl AsRef<Path>, sources: &[SourceRecord]) -> Result<(), SynthError> {
    let path = path.as_ref();
    let mut text = String::new();
    for s in sources {
        text.push_str(&serde_json::to_string(s).expect("source records serialize"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// How a composite's foreground was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CompositeMethod {
    ReinhardLab,
    XiaoRgb,
    FeckerHist,
    PitieIdt,
    Overlay,
}

impl CompositeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReinhardLab => "REINHARD_LAB",
            Self::XiaoRgb => "XIAO_RGB",
            Self::FeckerHist => "FECKER_HIST",
            Self::PitieIdt => "PITIE_IDT",
            Self::Overlay => "OVERLAY",
        }
    }
}

impl From<MethodTag> for CompositeMethod {
    fn from(t: MethodTag) -> Self {
        match t {
            MethodTag::ReinhardLab => Self::ReinhardLab,
            MethodTag::XiaoRgb => Self::XiaoRgb,
            MethodTag::FeckerHist => Self::FeckerHist,
            MethodTag::PitieIdt => Self::PitieIdt,
        }
    }
}

impl std::fmt::Display for CompositeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub filter_name: String,
    pub pass: bool,
    pub score: f64,
}

/// Discard categories used during manual review.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    OccludedForeground,
    HueChange,
    ObjectChange,
    Unrealistic,
}

impl std::str::FromStr for RejectReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown reason {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum HumanVerdict {
    Accept,
    Reject { reason: RejectReason },
}

/// Provenance of one composite / real pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub id: String,
    /// Id of the real (target) image; every composite has exactly one.
    pub real_id: String,
    pub composite_path: PathBuf,
    pub real_path: PathBuf,
    pub mask_path: PathBuf,
    pub method: CompositeMethod,
    pub reference_id: String,
    pub seed: u64,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_dataset: Option<String>,
    pub filter_verdicts: Vec<FilterVerdict>,
    #[serde(default)]
    pub human_verdict: Option<HumanVerdict>,
}

impl CompositeRecord {
    pub fn passed_filters(&self) -> bool {
        self.filter_verdicts.iter().all(|v| v.pass)
    }
}

pub fn real_rel_path(real_id: &str) -> PathBuf {
    Path::new("real").join(format!("{real_id}.png"))
}

pub fn mask_rel_path(real_id: &str) -> PathBuf {
    Path::new("mask").join(format!("{real_id}.png"))
}

pub fn composite_rel_path(id: &str) -> PathBuf {
    Path::new("composite").join(format!("{id}.png"))
}
