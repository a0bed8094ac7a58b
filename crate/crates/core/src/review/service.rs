use std::collections::{BTreeMap, HashMap};
use std::path::{Component, Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DuelGroup, Event, EventLog, ItemStatus, ReviewError, ReviewItem, ReviewState, Side};
use crate::btrank::ComparisonMatrix;
use crate::seed::derive_seed;
use crate::synth::{HumanVerdict, Manifest};

#[derive(Debug, Clone, Copy, Default)]
pub struct ServiceOptions {
    /// Seeds session tokens and left/right draws.
    pub seed: u64,
}

/// A comparison as the rater sees it: no method names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedTask {
    pub task_id: String,
    pub duel_id: String,
    pub served: u64,
    pub quota: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Real,
    Composite,
    Mask,
    Left,
    Right,
}

struct Inner {
    state: ReviewState,
    log: EventLog,
    /// Pending item ids handed to a session; not persisted.
    reservations: HashMap<String, String>,
}

impl Inner {
    fn commit(&mut self, event: Event) -> Result<(), ReviewError> {
        self.state.validate(&event)?;
        self.log.append(&event)?;
        self.state.apply(&event).expect("validated event applies");
        Ok(())
    }
}

pub struct ReviewService {
    root: PathBuf,
    seed: u64,
    inner: Mutex<Inner>,
}

impl ReviewService {
    /// Open the event log, replay it and serve images from `root`.
    pub fn open(log_path: impl AsRef<Path>, root: impl Into<PathBuf>, opts: ServiceOptions) -> Result<Self, ReviewError> {
        let (log, events) = EventLog::open(log_path)?;
        let state = ReviewState::replay(&events).map_err(|e| ReviewError::CorruptLog {
            path: log.path().to_path_buf(),
            reason: format!("replay failed: {e}"),
        })?;
        Ok(Self { root: root.into(), seed: opts.seed, inner: Mutex::new(Inner { state, log, reservations: HashMap::new() }) })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Snapshot of the replayed state.
    pub fn state(&self) -> ReviewState {
        self.lock().state.clone()
    }

    /// Add a pending item for each record not seen before; returns how many.
    ///
    /// Records already carrying a human verdict are skipped.
    pub fn enqueue_from_manifest(&self, manifest: &Manifest) -> Result<usize, ReviewError> {
        let mut inner = self.lock();
        let mut added = 0;
        for rec in manifest.records() {
            if rec.human_verdict.is_some() || inner.state.item(&rec.id).is_some() {
                continue;
            }
            inner.commit(Event::ItemEnqueued {
                item_id: rec.id.clone(),
                composite_path: rec.composite_path.clone(),
                real_path: rec.real_path.clone(),
                mask_path: rec.mask_path.clone(),
            })?;
            added += 1;
        }
        Ok(added)
    }

    /// Register a duel group; returns false when the id is already known.
    pub fn register_duel(&self, group: DuelGroup) -> Result<bool, ReviewError> {
        let mut inner = self.lock();
        if inner.state.has_duel(&group.duel_id) {
            return Ok(false);
        }
        inner.commit(Event::DuelRegistered { group })?;
        Ok(true)
    }

    pub fn mint_session(&self) -> Result<String, ReviewError> {
        let mut inner = self.lock();
        let mut n = inner.state.session_count();
        let session = loop {
            let token = format!("{:016x}", derive_seed(self.seed, &format!("session:{n}")));
            if !inner.state.has_session(&token) {
                break token;
            }
            n += 1;
        };
        inner.commit(Event::SessionMinted { session: session.clone() })?;
        Ok(session)
    }

    fn check_session(state: &ReviewState, session: &str) -> Result<(), ReviewError> {
        if state.has_session(session) { Ok(()) } else { Err(ReviewError::UnknownSession(session.to_string())) }
    }

    /// The lowest-id pending item not reserved by another session.
    pub fn next_review(&self, session: &str) -> Result<ReviewItem, ReviewError> {
        let mut inner = self.lock();
        Self::check_session(&inner.state, session)?;
        let item = inner
            .state
            .items()
            .filter(|i| i.status == ItemStatus::Pending)
            .find(|i| inner.reservations.get(&i.item_id).is_none_or(|s| s == session))
            .cloned()
            .ok_or(ReviewError::Exhausted("no pending item"))?;
        inner.reservations.insert(item.item_id.clone(), session.to_string());
        Ok(item)
    }

    pub fn submit_verdict(&self, item_id: &str, verdict: HumanVerdict) -> Result<ItemStatus, ReviewError> {
        let mut inner = self.lock();
        inner.commit(Event::Verdict { item_id: item_id.to_string(), verdict })?;
        inner.reservations.remove(item_id);
        Ok(inner.state.item(item_id).expect("item exists").status)
    }

    /// This session's unanswered task, or a newly scheduled one.
    pub fn next_comparison(&self, session: &str) -> Result<ServedTask, ReviewError> {
        let mut inner = self.lock();
        Self::check_session(&inner.state, session)?;
        let open = inner
            .state
            .tasks_for(session)
            .find(|t| t.result.is_none())
            .map(|t| (t.task_id.clone(), t.duel_id.clone()));
        let (task_id, duel_id) = match open {
            Some(t) => t,
            None => {
                let (duel_id, method_a, method_b) = inner.state.pick_pair(session)?.clone();
                let task_id = format!("t{:06}", inner.state.task_count());
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &task_id));
                let a_on_left = rng.random_bool(0.5);
                inner.commit(Event::TaskServed {
                    task_id: task_id.clone(),
                    session: session.to_string(),
                    duel_id: duel_id.clone(),
                    method_a,
                    method_b,
                    a_on_left,
                })?;
                (task_id, duel_id)
            }
        };
        let (served, quota) = inner.state.progress();
        Ok(ServedTask { task_id, duel_id, served, quota })
    }

    pub fn submit_comparison(&self, session: &str, task_id: &str, choice: Side) -> Result<(), ReviewError> {
        let mut inner = self.lock();
        let task = inner.state.task(task_id).ok_or_else(|| ReviewError::UnknownTask(task_id.to_string()))?;
        if task.session != session {
            return Err(ReviewError::WrongSession(task_id.to_string()));
        }
        let winner = task.winner_for(choice);
        inner.commit(Event::ComparisonSubmitted { task_id: task_id.to_string(), winner })
    }

    pub fn export_csv(&self) -> Result<String, ReviewError> {
        self.lock().state.export_csv()
    }

    pub fn comparison_matrix(&self) -> Result<ComparisonMatrix, ReviewError> {
        self.lock().state.comparison_matrix()
    }

    /// File backing an image URL. Item kinds take an item id, left/right a task id.
    pub fn image_path(&self, kind: ImageKind, id: &str) -> Result<PathBuf, ReviewError> {
        let inner = self.lock();
        let rel = match kind {
            ImageKind::Real | ImageKind::Composite | ImageKind::Mask => {
                let item = inner.state.item(id).ok_or_else(|| ReviewError::UnknownItem(id.to_string()))?;
                match kind {
                    ImageKind::Real => item.real_path.clone(),
                    ImageKind::Composite => item.composite_path.clone(),
                    _ => item.mask_path.clone(),
                }
            }
            ImageKind::Left | ImageKind::Right => {
                let task = inner.state.task(id).ok_or_else(|| ReviewError::UnknownTask(id.to_string()))?;
                let side = if kind == ImageKind::Left { Side::Left } else { Side::Right };
                task.path_for(side).clone()
            }
        };
        if rel.components().any(|c| c == Component::ParentDir) {
            return Err(ReviewError::Invalid(format!("path {} leaves the dataset", rel.display())));
        }
        Ok(if rel.is_absolute() { rel } else { self.root.join(rel) })
    }
}

/// Manifest with human verdicts attached and rejected records removed.
pub fn apply_verdicts(manifest: &Manifest, state: &ReviewState) -> Manifest {
    let mut out = manifest.clone();
    out.entries.retain_mut(|e| match state.item(&e.record.id).map(|i| i.status) {
        Some(ItemStatus::Accepted) => {
            e.record.human_verdict = Some(HumanVerdict::Accept);
            true
        }
        Some(ItemStatus::Rejected { reason }) => {
            e.record.human_verdict = Some(HumanVerdict::Reject { reason });
            false
        }
        _ => !matches!(e.record.human_verdict, Some(HumanVerdict::Reject { .. })),
    });
    out
}

/// Read duel groups from JSONL; relative output paths stay relative to the
/// dataset root. `replicates` defaults to `default_replicates`.
pub fn load_duels(path: impl AsRef<Path>, default_replicates: u32) -> Result<Vec<DuelGroup>, ReviewError> {
    #[derive(Deserialize)]
    struct Line {
        duel_id: String,
        outputs: BTreeMap<String, PathBuf>,
        replicates: Option<u32>,
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ReviewError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let line: Line = serde_json::from_str(l)
                .map_err(|e| ReviewError::Invalid(format!("{}:{}: {e}", path.display(), k + 1)))?;
            Ok(DuelGroup {
                duel_id: line.duel_id,
                outputs: line.outputs,
                replicates: line.replicates.unwrap_or(default_replicates),
            })
        })
        .collect()
}
