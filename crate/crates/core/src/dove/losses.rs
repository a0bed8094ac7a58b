use super::DoveError;

pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the adversarial terms.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA }
    }
}

impl LossConfig {
    pub fn new(lambda: f64) -> Result<Self, DoveError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(DoveError::InvalidParameter(format!("lambda {lambda} must be finite and >= 0")));
        }
        Ok(Self { lambda })
    }
}

/// Every loss term of one generator/discriminator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_rec: f64,
    pub l_dg: f64,
    pub l_gg: f64,
    pub l_dv: f64,
    pub l_gv: f64,
    pub l_g_total: f64,
}

impl LossReport {
    /// Discriminator terms from score lists, generator terms from the fake scores.
    pub fn compute(
        l_rec: f64,
        global: (&[f64], &[f64]),
        verification: (&[f64], &[f64]),
        cfg: LossConfig,
    ) -> Result<Self, DoveError> {
        let l_gg = hinge_g_loss(global.1)?;
        let l_gv = hinge_g_loss(verification.1)?;
        Ok(Self {
            l_rec,
            l_dg: hinge_d_loss(global.0, global.1)?,
            l_gg,
            l_dv: hinge_d_loss(verification.0, verification.1)?,
            l_gv,
            l_g_total: generator_total_loss(l_rec, l_gg, l_gv, cfg)?,
        })
    }
}

/// Inner product `l_f · l_b`.
pub fn domain_similarity(l_f: &[f64], l_b: &[f64]) -> Result<f64, DoveError> {
    if l_f.len() != l_b.len() {
        return Err(DoveError::Shape(format!("representation lengths {} and {}", l_f.len(), l_b.len())));
    }
    Ok(l_f.iter().zip(l_b).map(|(a, b)| a * b).sum())
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// `E[max(0, 1 − real)] + E[max(0, 1 + fake)]`.
pub fn hinge_d_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64, DoveError> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(DoveError::Empty("hinge scores"));
    }
    Ok(mean(real_scores.iter().map(|s| (1.0 - s).max(0.0)), real_scores.len())
        + mean(fake_scores.iter().map(|s| (1.0 + s).max(0.0)), fake_scores.len()))
}

/// `−E[fake]`.
pub fn hinge_g_loss(fake_scores: &[f64]) -> Result<f64, DoveError> {
    if fake_scores.is_empty() {
        return Err(DoveError::Empty("generator scores"));
    }
    Ok(-mean(fake_scores.iter().copied(), fake_scores.len()))
}

/// Mean absolute difference over all entries.
pub fn reconstruction_loss(pred: &[f64], target: &[f64]) -> Result<f64, DoveError> {
    if pred.len() != target.len() {
        return Err(DoveError::Shape(format!("prediction {} vs target {} entries", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(DoveError::Empty("reconstruction input"));
    }
    Ok(mean(pred.iter().zip(target).map(|(p, t)| (p - t).abs()), pred.len()))
}

/// `l_rec + λ·(l_gg + l_gv)`.
pub fn generator_total_loss(l_rec: f64, l_gg: f64, l_gv: f64, cfg: LossConfig) -> Result<f64, DoveError> {
    if ![l_rec, l_gg, l_gv, cfg.lambda].iter().all(|v| v.is_finite()) {
        return Err(DoveError::NonFinite("generator loss terms"));
    }
    Ok(l_rec + cfg.lambda * (l_gg + l_gv))
}
