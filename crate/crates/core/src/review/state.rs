use std::collections::{BTreeMap, BTreeSet};

use super::{ComparisonTask, DuelGroup, Event, ItemStatus, ReviewError, ReviewItem, Winner};
use crate::btrank::ComparisonMatrix;

/// `(duel_id, method_a, method_b)` with `method_a < method_b`.
pub type PairKey = (String, String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairSlot {
    pub served: u32,
    pub results: u32,
    pub replicates: u32,
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewState {
    items: BTreeMap<String, ReviewItem>,
    duels: BTreeMap<String, DuelGroup>,
    pairs: BTreeMap<PairKey, PairSlot>,
    sessions: BTreeSet<String>,
    seen: BTreeMap<String, BTreeSet<PairKey>>,
    tasks: BTreeMap<String, ComparisonTask>,
    /// Task ids in submission order.
    submitted: Vec<String>,
    applied: u64,
}

fn invalid(msg: impl Into<String>) -> ReviewError {
    ReviewError::Invalid(msg.into())
}

impl ReviewState {
    /// Fold a sequence of events from an empty state.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, ReviewError> {
        let mut s = Self::default();
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    /// Check that `event` is legal in the current state.
    pub fn validate(&self, event: &Event) -> Result<(), ReviewError> {
        match event {
            Event::ItemEnqueued { item_id, .. } => {
                if self.items.contains_key(item_id) {
                    return Err(invalid(format!("item `{item_id}` already enqueued")));
                }
            }
            Event::Verdict { item_id, .. } => {
                let item = self.items.get(item_id).ok_or_else(|| ReviewError::UnknownItem(item_id.clone()))?;
                if item.status != ItemStatus::Pending {
                    return Err(ReviewError::AlreadyDecided(item_id.clone()));
                }
            }
            Event::DuelRegistered { group } => {
                if self.duels.contains_key(&group.duel_id) {
                    return Err(invalid(format!("duel `{}` already registered", group.duel_id)));
                }
                if group.outputs.len() < 2 || group.replicates == 0 {
                    return Err(invalid("a duel needs two or more outputs and replicates >= 1"));
                }
            }
            Event::SessionMinted { session } => {
                if self.sessions.contains(session) {
                    return Err(invalid(format!("session `{session}` already exists")));
                }
            }
            Event::TaskServed { task_id, session, duel_id, method_a, method_b, .. } => {
                if self.tasks.contains_key(task_id) {
                    return Err(invalid(format!("task `{task_id}` already exists")));
                }
                if !self.sessions.contains(session) {
                    return Err(ReviewError::UnknownSession(session.clone()));
                }
                let key = (duel_id.clone(), method_a.clone(), method_b.clone());
                let slot = self.pairs.get(&key).ok_or_else(|| invalid(format!("no pair {key:?}")))?;
                if slot.served >= slot.replicates {
                    return Err(invalid(format!("pair {key:?} is at quota")));
                }
                if self.seen.get(session).is_some_and(|s| s.contains(&key)) {
                    return Err(invalid(format!("pair {key:?} already shown to `{session}`")));
                }
            }
            Event::ComparisonSubmitted { task_id, .. } => {
                let task = self.tasks.get(task_id).ok_or_else(|| ReviewError::UnknownTask(task_id.clone()))?;
                if task.result.is_some() {
                    return Err(ReviewError::AlreadySubmitted(task_id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Validate and apply; the state is unchanged on error.
    pub fn apply(&mut self, event: &Event) -> Result<(), ReviewError> {
        self.validate(event)?;
        match event.clone() {
            Event::ItemEnqueued { item_id, composite_path, real_path, mask_path } => {
                let item = ReviewItem { item_id: item_id.clone(), composite_path, real_path, mask_path, status: ItemStatus::Pending };
                self.items.insert(item_id, item);
            }
            Event::Verdict { item_id, verdict } => {
                self.items.get_mut(&item_id).expect("validated").status = verdict.into();
            }
            Event::DuelRegistered { group } => {
                let methods: Vec<&String> = group.outputs.keys().collect();
                for (i, a) in methods.iter().enumerate() {
                    for b in &methods[i + 1..] {
                        let key = (group.duel_id.clone(), (*a).clone(), (*b).clone());
                        self.pairs.insert(key, PairSlot { replicates: group.replicates, ..PairSlot::default() });
                    }
                }
                self.duels.insert(group.duel_id.clone(), group);
            }
            Event::SessionMinted { session } => {
                self.sessions.insert(session);
            }
            Event::TaskServed { task_id, session, duel_id, method_a, method_b, a_on_left } => {
                let key = (duel_id.clone(), method_a.clone(), method_b.clone());
                self.pairs.get_mut(&key).expect("validated").served += 1;
                self.seen.entry(session.clone()).or_default().insert(key);
                let duel = &self.duels[&duel_id];
                let task = ComparisonTask {
                    task_id: task_id.clone(),
                    image_a_path: duel.outputs[&method_a].clone(),
                    image_b_path: duel.outputs[&method_b].clone(),
                    duel_id,
                    method_a,
                    method_b,
                    a_on_left,
                    session,
                    result: None,
                };
                self.tasks.insert(task_id, task);
            }
            Event::ComparisonSubmitted { task_id, winner } => {
                let task = self.tasks.get_mut(&task_id).expect("validated");
                task.result = Some(winner);
                let key = (task.duel_id.clone(), task.method_a.clone(), task.method_b.clone());
                self.pairs.get_mut(&key).expect("task pair exists").results += 1;
                self.submitted.push(task_id);
            }
        }
        self.applied += 1;
        Ok(())
    }

    pub fn events_applied(&self) -> u64 {
        self.applied
    }

    pub fn item(&self, id: &str) -> Option<&ReviewItem> {
        self.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    /// `(pending, accepted, rejected)`.
    pub fn item_counts(&self) -> (usize, usize, usize) {
        self.items.values().fold((0, 0, 0), |(p, a, r), i| match i.status {
            ItemStatus::Pending => (p + 1, a, r),
            ItemStatus::Accepted => (p, a + 1, r),
            ItemStatus::Rejected { .. } => (p, a, r + 1),
        })
    }

    pub fn has_session(&self, session: &str) -> bool {
        self.sessions.contains(session)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn has_duel(&self, id: &str) -> bool {
        self.duels.contains_key(id)
    }

    pub fn task(&self, id: &str) -> Option<&ComparisonTask> {
        self.tasks.get(id)
    }

    pub fn all_tasks(&self) -> impl Iterator<Item = &ComparisonTask> {
        self.tasks.values()
    }

    pub fn tasks_for<'a>(&'a self, session: &'a str) -> impl Iterator<Item = &'a ComparisonTask> + 'a {
        self.tasks.values().filter(move |t| t.session == session)
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn pairs(&self) -> &BTreeMap<PairKey, PairSlot> {
        &self.pairs
    }

    /// `(served, quota)` summed over all pairs.
    pub fn progress(&self) -> (u64, u64) {
        self.pairs.values().fold((0, 0), |(s, q), p| (s + p.served as u64, q + p.replicates as u64))
    }

    /// The next pair for `session`: among pairs below quota, those with the
    /// fewest servings overall; the first of them (key order) this session
    /// has not seen. Serving only from the minimum keeps per-pair counts
    /// within one of each other.
    pub fn pick_pair(&self, session: &str) -> Result<&PairKey, ReviewError> {
        let open = self.pairs.iter().filter(|(_, s)| s.served < s.replicates);
        let Some(min) = open.clone().map(|(_, s)| s.served).min() else {
            return Err(ReviewError::Exhausted("every pair reached its quota"));
        };
        let seen = self.seen.get(session);
        open.filter(|(_, s)| s.served == min)
            .map(|(k, _)| k)
            .find(|k| !seen.is_some_and(|s| s.contains(*k)))
            .ok_or(ReviewError::Exhausted("no unseen pair for this session"))
    }

    /// Submitted results as `(winner, loser)` method names, in order.
    pub fn results(&self) -> impl Iterator<Item = (&str, &str, &ComparisonTask)> {
        self.submitted.iter().map(|id| {
            let t = &self.tasks[id];
            match t.result.expect("submitted") {
                Winner::A => (t.method_a.as_str(), t.method_b.as_str(), t),
                Winner::B => (t.method_b.as_str(), t.method_a.as_str(), t),
            }
        })
    }

    pub fn result_count(&self) -> usize {
        self.submitted.len()
    }

    /// Wins over every method that appears in a registered duel.
    pub fn comparison_matrix(&self) -> Result<ComparisonMatrix, ReviewError> {
        if self.submitted.is_empty() {
            return Err(ReviewError::NoData);
        }
        let methods: BTreeSet<String> = self.duels.values().flat_map(|d| d.outputs.keys().cloned()).collect();
        let mut m = ComparisonMatrix::new(methods.into_iter().collect()).expect("names are unique");
        for (w, l, _) in self.results() {
            m.record(w, l).expect("methods registered");
        }
        Ok(m)
    }

    /// `method_a,method_b,winner` lines in submission order.
    pub fn export_csv(&self) -> Result<String, ReviewError> {
        if self.submitted.is_empty() {
            return Err(ReviewError::NoData);
        }
        let mut out = String::from("method_a,method_b,winner\n");
        for (w, _, t) in self.results() {
            out.push_str(&format!("{},{},{w}\n", t.method_a, t.method_b));
        }
        Ok(out)
    }
}
