use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{composite_rel_path, mask_rel_path, real_rel_path, CompositeMethod, CompositeRecord, SourceRecord, SynthError};
use crate::imgcore::{overlay_composite, read_image, read_mask, write_image};
use crate::transfer::{random_transfer, TransferDefaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CompositeMode {
    /// Color transfer from the reference foreground onto the target foreground.
    Transfer,
    /// Region substitution from a pixel-aligned capture of the same scene.
    Overlay,
}

impl CompositeMode {
    pub fn for_target(target: &SourceRecord) -> Self {
        if target.scene_id.is_some() {
            Self::Overlay
        } else {
            Self::Transfer
        }
    }
}

/// Build one composite for `target` and write it to `<root>/composite/<id>.png`.
///
/// The real image and mask are expected at their canonical locations under
/// `root` (the pipeline writes them once per target). Returns the record
/// (without filter verdicts) and the transfer clamp fraction.
pub fn generate_composite(
    root: &Path,
    id: &str,
    target: &SourceRecord,
    reference: &SourceRecord,
    mode: CompositeMode,
    seed: u64,
    defaults: TransferDefaults,
) -> Result<(CompositeRecord, f64), SynthError> {
    let real = read_image(&target.image_path)?;
    let mask = read_mask(&target.mask_path)?;
    mask.ensure_matches(&real)?;
    let ref_img = read_image(&reference.image_path)?;

    let (composite, method, clamp) = match mode {
        CompositeMode::Overlay => {
            if target.scene_id.is_none() || target.scene_id != reference.scene_id {
                return Err(SynthError::NotAligned(format!("{} vs {}", target.id, reference.id)));
            }
            if ref_img.width() != real.width() || ref_img.height() != real.height() {
                return Err(SynthError::NotAligned(format!(
                    "{} is {}x{}, {} is {}x{}",
                    target.id,
                    real.width(),
                    real.height(),
                    reference.id,
                    ref_img.width(),
                    ref_img.height()
                )));
            }
            (overlay_composite(&real, &ref_img, &mask)?, CompositeMethod::Overlay, 0.0)
        }
        CompositeMode::Transfer => {
            let ref_mask = read_mask(&reference.mask_path)?;
            let (out, method) = random_transfer(&real, &mask, &ref_img, &ref_mask, seed, defaults)?;
            (out.image, method.tag().into(), out.clamp_fraction)
        }
    };

    let composite_path = composite_rel_path(id);
    write_image(root.join(&composite_path), &composite)?;
    let record = CompositeRecord {
        id: id.to_string(),
        real_id: target.id.clone(),
        composite_path,
        real_path: real_rel_path(&target.id),
        mask_path: mask_rel_path(&target.id),
        method,
        reference_id: reference.id.clone(),
        seed,
        category: target.category_label.clone(),
        sub_dataset: target.sub_dataset.clone(),
        filter_verdicts: Vec::new(),
        human_verdict: None,
    };
    Ok((record, clamp))
}
