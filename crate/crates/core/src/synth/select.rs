use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SourceRecord, SynthError};

/// Seeded uniform choice of a reference for `target`.
///
/// Aligned-scene targets draw from the other captures of their scene;
/// everything else draws from other records of the same category. Candidates
/// are ordered by id first, so the pool's order does not matter.
pub fn select_reference<'a>(
    pool: &'a [SourceRecord],
    target: &SourceRecord,
    seed: u64,
) -> Result<&'a SourceRecord, SynthError> {
    let mut candidates: Vec<&SourceRecord> = pool
        .iter()
        .filter(|r| r.id != target.id)
        .filter(|r| match &target.scene_id {
            Some(scene) => r.scene_id.as_ref() == Some(scene),
            None => r.category_label == target.category_label,
        })
        .collect();
    if candidates.is_empty() {
        return Err(SynthError::NoCandidate(target.id.clone()));
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(candidates[rng.random_range(0..candidates.len())])
}
