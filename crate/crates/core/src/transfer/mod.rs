//! Foreground color transfer from a reference region onto a target region.
//!
//! Four methods, one per quadrant of the parametric / non-parametric and
//! correlated / decorrelated split:
//!
//! | method | model | space |
//! |---|---|---|
//! | [`transfer_reinhard`] | per-channel mean and std | Lab (log-LMS) |
//! | [`transfer_xiao`] | mean and covariance | RGB |
//! | [`transfer_fecker`] | cumulative histogram mapping | YCbCr |
//! | [`transfer_pitie`] | iterative 1-D projection matching | RGB |
//!
//! Statistics come from the masked foreground of each image. Only target
//! foreground pixels are rewritten; background pixels are copied bit for bit.
//! Results are clamped to `[0, 1]` once, at the end, and the fraction of
//! clamped foreground pixels is reported.

mod fecker;
mod pitie;
mod reinhard;
mod xiao;

pub use fecker::{histogram_match_channels, match_histogram_1d, transfer_fecker, HistogramLut};
pub use pitie::{
    random_rotation, transfer_pitie, transfer_pitie_with, DistributionTransfer, RotationSource,
};
pub use reinhard::transfer_reinhard;
pub use xiao::{transfer_xiao, xiao_matrices, FrameMatrices, TransferMatrices, XIAO_EIGEN_FLOOR};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgcore::{ColorSpace, Image, ImageError, Mask};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub const DEFAULT_BINS: usize = 256;
pub const DEFAULT_PITIE_ITERS: usize = 10;

/// Serialized method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MethodTag {
    ReinhardLab,
    XiaoRgb,
    FeckerHist,
    PitieIdt,
}

impl MethodTag {
    pub const ALL: [MethodTag; 4] = [Self::ReinhardLab, Self::XiaoRgb, Self::FeckerHist, Self::PitieIdt];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReinhardLab => "REINHARD_LAB",
            Self::XiaoRgb => "XIAO_RGB",
            Self::FeckerHist => "FECKER_HIST",
            Self::PitieIdt => "PITIE_IDT",
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A transfer method together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransferMethod {
    ReinhardLab,
    XiaoRgb,
    FeckerHist { bins: usize },
    PitieIdt { iters: usize, seed: u64 },
}

impl TransferMethod {
    pub fn tag(&self) -> MethodTag {
        match self {
            Self::ReinhardLab => MethodTag::ReinhardLab,
            Self::XiaoRgb => MethodTag::XiaoRgb,
            Self::FeckerHist { .. } => MethodTag::FeckerHist,
            Self::PitieIdt { .. } => MethodTag::PitieIdt,
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        match *self {
            Self::FeckerHist { bins } if !(64..=65536).contains(&bins) => {
                Err(TransferError::InvalidParameter(format!("bin count {bins} outside [64, 65536]")))
            }
            Self::PitieIdt { iters: 0, .. } => Err(TransferError::InvalidParameter("iteration count must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn apply(
        &self,
        target: &Image,
        t_mask: &Mask,
        reference: &Image,
        r_mask: &Mask,
    ) -> Result<Transferred, TransferError> {
        match *self {
            Self::ReinhardLab => transfer_reinhard(target, t_mask, reference, r_mask),
            Self::XiaoRgb => transfer_xiao(target, t_mask, reference, r_mask),
            Self::FeckerHist { bins } => transfer_fecker(target, t_mask, reference, r_mask, bins),
            Self::PitieIdt { iters, seed } => transfer_pitie(target, t_mask, reference, r_mask, iters, seed),
        }
    }
}

/// Parameters used when a method is drawn at random.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferDefaults {
    pub bins: usize,
    pub pitie_iters: usize,
}

impl Default for TransferDefaults {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS, pitie_iters: DEFAULT_PITIE_ITERS }
    }
}

/// Transfer output plus the fraction of foreground pixels that needed clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct Transferred {
    pub image: Image,
    pub clamp_fraction: f64,
}

/// Uniform seeded draw of one of the four methods.
pub fn choose_method(seed: u64, defaults: TransferDefaults) -> TransferMethod {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match rng.random_range(0..4u32) {
        0 => TransferMethod::ReinhardLab,
        1 => TransferMethod::XiaoRgb,
        2 => TransferMethod::FeckerHist { bins: defaults.bins },
        _ => TransferMethod::PitieIdt { iters: defaults.pitie_iters, seed: rng.random() },
    }
}

/// Pick a method with [`choose_method`] and apply it.
pub fn random_transfer(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
    seed: u64,
    defaults: TransferDefaults,
) -> Result<(Transferred, TransferMethod), TransferError> {
    let method = choose_method(seed, defaults);
    let out = method.apply(target, t_mask, reference, r_mask)?;
    Ok((out, method))
}

pub(crate) fn check_inputs(target: &Image, t_mask: &Mask, reference: &Image, r_mask: &Mask) -> Result<(), ImageError> {
    target.ensure_rgb()?;
    reference.ensure_rgb()?;
    t_mask.ensure_matches(target)?;
    r_mask.ensure_matches(reference)?;
    if t_mask.foreground_count() == 0 || r_mask.foreground_count() == 0 {
        return Err(ImageError::EmptyMask);
    }
    Ok(())
}

pub(crate) fn foreground_cloud(img: &Image, mask: &Mask) -> Vec<[f64; 3]> {
    mask.foreground_indices().map(|i| img.pixel(i)).collect()
}

pub(crate) fn convert_cloud(cloud: &[[f64; 3]], from: ColorSpace, to: ColorSpace) -> Result<Vec<[f64; 3]>, ImageError> {
    let data = cloud.iter().flatten().copied().collect();
    let img = Image::new(cloud.len(), 1, data, from)?;
    Ok(crate::imgcore::convert_color_space(&img, to)?.pixels().collect())
}

/// Write transferred foreground values (RGB, unclamped) into a copy of the target.
pub(crate) fn write_foreground(target: &Image, t_mask: &Mask, values: &[[f64; 3]]) -> Transferred {
    let mut out = target.clone();
    let mut clamped = 0usize;
    for (i, v) in t_mask.foreground_indices().zip(values) {
        let c = v.map(|x| x.clamp(0.0, 1.0));
        if c != *v {
            clamped += 1;
        }
        out.set_pixel(i, c);
    }
    Transferred { image: out, clamp_fraction: clamped as f64 / values.len() as f64 }
}
