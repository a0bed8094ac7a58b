//! Triage and pairwise-comparison review service.
//!
//! All state is a fold over an append-only JSONL event log. Writes are
//! serialized through one appender and acknowledged only after `fsync`.

mod http;
mod log;
mod service;
mod state;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::synth::{HumanVerdict, RejectReason};

pub use http::{router, serve};
pub use log::{EventLog, LogLine};
pub use service::{apply_verdicts, load_duels, ImageKind, ReviewService, ServedTask, ServiceOptions};
pub use state::{PairKey, PairSlot, ReviewState};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{0}` already has a verdict")]
    AlreadyDecided(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` already has a result")]
    AlreadySubmitted(String),
    #[error("task `{0}` was served to another session")]
    WrongSession(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("missing session token")]
    MissingSession,
    #[error("nothing left to serve: {0}")]
    Exhausted(&'static str),
    #[error("no comparison results recorded")]
    NoData,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("event log {}: {reason}", path.display())]
    CorruptLog { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
}

impl ReviewError {
    /// Machine-readable error tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::UnknownItem(_) => "unknown_item",
            Self::AlreadyDecided(_) => "already_decided",
            Self::UnknownTask(_) => "unknown_task",
            Self::AlreadySubmitted(_) => "already_submitted",
            Self::WrongSession(_) => "wrong_session",
            Self::UnknownSession(_) => "unknown_session",
            Self::MissingSession => "missing_session",
            Self::Exhausted(_) => "exhausted",
            Self::NoData => "no_data",
            Self::Invalid(_) => "invalid_request",
            Self::CorruptLog { .. } => "corrupt_log",
            Self::Io { .. } => "io",
            Self::Synth(_) => "dataset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Accepted,
    Rejected { reason: RejectReason },
}

impl From<HumanVerdict> for ItemStatus {
    fn from(v: HumanVerdict) -> Self {
        match v {
            HumanVerdict::Accept => Self::Accepted,
            HumanVerdict::Reject { reason } => Self::Rejected { reason },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub composite_path: PathBuf,
    pub real_path: PathBuf,
    pub mask_path: PathBuf,
    #[serde(flatten)]
    pub status: ItemStatus,
}

/// Which of a task's two methods won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
}

/// Screen position as seen by the rater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTask {
    pub task_id: String,
    pub duel_id: String,
    pub method_a: String,
    pub method_b: String,
    pub image_a_path: PathBuf,
    pub image_b_path: PathBuf,
    /// True when method A is shown on the left.
    pub a_on_left: bool,
    pub session: String,
    pub result: Option<Winner>,
}

impl ComparisonTask {
    pub fn winner_for(&self, side: Side) -> Winner {
        match (side, self.a_on_left) {
            (Side::Left, true) | (Side::Right, false) => Winner::A,
            _ => Winner::B,
        }
    }

    pub fn path_for(&self, side: Side) -> &PathBuf {
        match self.winner_for(side) {
            Winner::A => &self.image_a_path,
            Winner::B => &self.image_b_path,
        }
    }
}

/// One composite rendered by several methods; every method pair is compared
/// `replicates` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuelGroup {
    pub duel_id: String,
    pub outputs: BTreeMap<String, PathBuf>,
    pub replicates: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ItemEnqueued { item_id: String, composite_path: PathBuf, real_path: PathBuf, mask_path: PathBuf },
    Verdict { item_id: String, verdict: HumanVerdict },
    DuelRegistered { group: DuelGroup },
    SessionMinted { session: String },
    TaskServed { task_id: String, session: String, duel_id: String, method_a: String, method_b: String, a_on_left: bool },
    ComparisonSubmitted { task_id: String, winner: Winner },
}
