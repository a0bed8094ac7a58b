use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_inputs, foreground_cloud, write_foreground, TransferError, TransferMethod, Transferred};
use crate::imgcore::{Image, Mask};

/// Haar-uniform orthonormal matrix from the QR factorization of a Gaussian matrix.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let g = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..3 {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Where the per-iteration rotations come from.
#[derive(Debug, Clone)]
pub enum RotationSource {
    Seeded(ChaCha8Rng),
    /// Always the identity: reduces each iteration to per-channel matching.
    Identity,
}

impl RotationSource {
    pub fn seeded(seed: u64) -> Self {
        Self::Seeded(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_rotation(&mut self) -> Matrix3<f64> {
        match self {
            Self::Seeded(rng) => random_rotation(rng),
            Self::Identity => Matrix3::identity(),
        }
    }
}

/// Iterative distribution transfer over point clouds.
///
/// Each step projects both clouds onto the rows of a rotation, matches every
/// 1-D marginal of the target to the reference by quantiles, and moves the
/// target points by the rotated-back displacement.
#[derive(Debug, Clone)]
pub struct DistributionTransfer {
    current: Vec<[f64; 3]>,
    reference: Vec<[f64; 3]>,
}

impl DistributionTransfer {
    pub fn new(target: Vec<[f64; 3]>, reference: Vec<[f64; 3]>) -> Self {
        Self { current: target, reference }
    }

    pub fn current(&self) -> &[[f64; 3]] {
        &self.current
    }

    pub fn into_cloud(self) -> Vec<[f64; 3]> {
        self.current
    }

    pub fn step(&mut self, rotation: &Matrix3<f64>) {
        let mut deltas = vec![Vector3::zeros(); self.current.len()];
        for axis in 0..3 {
            let dir: Vector3<f64> = rotation.row(axis).transpose();
            let proj: Vec<f64> = self.current.iter().map(|p| dir.dot(&Vector3::from(*p))).collect();
            let mut ref_proj: Vec<f64> = self.reference.iter().map(|p| dir.dot(&Vector3::from(*p))).collect();
            ref_proj.sort_by(f64::total_cmp);
            let matched = match_quantiles(&proj, &ref_proj);
            for ((d, m), p) in deltas.iter_mut().zip(&matched).zip(&proj) {
                *d += dir * (m - p);
            }
        }
        for (p, d) in self.current.iter_mut().zip(&deltas) {
            for c in 0..3 {
                p[c] += d[c];
            }
        }
    }
}

/// Map each value to the reference quantile at its own rank.
///
/// With equal sample counts this is the sorted-order assignment; otherwise the
/// reference quantile function is linearly interpolated.
pub(crate) fn match_quantiles(values: &[f64], sorted_reference: &[f64]) -> Vec<f64> {
    let n = values.len();
    let m = sorted_reference.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        let pos = (((rank as f64 + 0.5) / n as f64) * m as f64 - 0.5).clamp(0.0, (m - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(m - 1);
        let frac = pos - lo as f64;
        out[idx] = if frac == 0.0 {
            sorted_reference[lo]
        } else {
            sorted_reference[lo] + (sorted_reference[hi] - sorted_reference[lo]) * frac
        };
    }
    out
}

/// Iterative distribution transfer with seeded random rotations.
pub fn transfer_pitie(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
    iters: usize,
    seed: u64,
) -> Result<Transferred, TransferError> {
    transfer_pitie_with(target, t_mask, reference, r_mask, iters, &mut RotationSource::seeded(seed))
}

pub fn transfer_pitie_with(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
    iters: usize,
    rotations: &mut RotationSource,
) -> Result<Transferred, TransferError> {
    TransferMethod::PitieIdt { iters, seed: 0 }.validate()?;
    check_inputs(target, t_mask, reference, r_mask)?;
    let mut idt = DistributionTransfer::new(foreground_cloud(target, t_mask), foreground_cloud(reference, r_mask));
    for _ in 0..iters {
        idt.step(&rotations.next_rotation());
    }
    Ok(write_foreground(target, t_mask, idt.current()))
}
