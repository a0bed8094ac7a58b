use super::{
    domain_similarity, generator_total_loss, hinge_d_loss, hinge_g_loss, reconstruction_loss, DoveError, LossConfig,
};

/// Scalar function of a flat parameter vector with an analytic gradient.
pub trait Differentiable {
    fn name(&self) -> &str;
    fn eval(&self, x: &[f64]) -> Result<f64, DoveError>;
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DoveError>;
    /// True when coordinate `i` is within `h` of a non-differentiable point.
    fn near_kink(&self, _x: &[f64], _i: usize, _h: f64) -> bool {
        false
    }
    /// True when the function is linear in every coordinate.
    fn is_linear(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped at kinks.
    pub excluded: usize,
}

fn rel_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-12 { (a - n).abs() } else { (a - n).abs() / scale }
}

/// Compare the analytic gradient with central differences of step `h`.
pub fn grad_check(f: &dyn Differentiable, x: &[f64], h: f64) -> Result<GradCheck, DoveError> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(DoveError::InvalidParameter(format!("perturbation {h} outside [1e-6, 1e-3]")));
    }
    let analytic = f.grad(x)?;
    let mut report = GradCheck { max_rel_error: 0.0, checked: 0, excluded: 0 };
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        if f.near_kink(x, i, h) {
            report.excluded += 1;
            continue;
        }
        probe[i] = x[i] + h;
        let up = f.eval(&probe)?;
        probe[i] = x[i] - h;
        let down = f.eval(&probe)?;
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(DoveError::NonFinite("loss at perturbed point"));
        }
        let numeric = (up - down) / (2.0 * h);
        report.max_rel_error = report.max_rel_error.max(rel_error(analytic[i], numeric));
        report.checked += 1;
    }
    Ok(report)
}

/// `l_f · l_b` over `x = [l_f ; l_b]`.
pub struct DomainSimilarityFn {
    pub dim: usize,
}

impl Differentiable for DomainSimilarityFn {
    fn name(&self) -> &str {
        "domain_similarity"
    }
    fn eval(&self, x: &[f64]) -> Result<f64, DoveError> {
        domain_similarity(&x[..self.dim], &x[self.dim..])
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DoveError> {
        let mut g = x[self.dim..].to_vec();
        g.extend_from_slice(&x[..self.dim]);
        Ok(g)
    }
    fn is_linear(&self) -> bool {
        // Bilinear: linear in each coordinate separately.
        true
    }
}

/// Discriminator hinge over `x = [real ; fake]`.
pub struct HingeDFn {
    pub n_real: usize,
}

impl Differentiable for HingeDFn {
    fn name(&self) -> &str {
        "hinge_d_loss"
    }
    fn eval(&self, x: &[f64]) -> Result<f64, DoveError> {
        hinge_d_loss(&x[..self.n_real], &x[self.n_real..])
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DoveError> {
        let (nr, nf) = (self.n_real as f64, (x.len() - self.n_real) as f64);
        Ok(x.iter()
            .enumerate()
            .map(|(i, &s)| {
                if i < self.n_real {
                    if 1.0 - s > 0.0 { -1.0 / nr } else { 0.0 }
                } else if 1.0 + s > 0.0 {
                    1.0 / nf
                } else {
                    0.0
                }
            })
            .collect())
    }
    fn near_kink(&self, x: &[f64], i: usize, h: f64) -> bool {
        let margin = if i < self.n_real { 1.0 - x[i] } else { 1.0 + x[i] };
        margin.abs() <= h
    }
}

pub struct HingeGFn;

impl Differentiable for HingeGFn {
    fn name(&self) -> &str {
        "hinge_g_loss"
    }
    fn eval(&self, x: &[f64]) -> Result<f64, DoveError> {
        hinge_g_loss(x)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DoveError> {
        Ok(vec![-1.0 / x.len() as f64; x.len()])
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// Mean absolute error against a fixed target, over the prediction.
pub struct ReconstructionFn {
    pub target: Vec<f64>,
}

impl Differentiable for ReconstructionFn {
    fn name(&self) -> &str {
        "reconstruction_loss"
    }
    fn eval(&self, x: &[f64]) -> Result<f64, DoveError> {
        reconstruction_loss(x, &self.target)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DoveError> {
        let n = x.len() as f64;
        Ok(x.iter().zip(&self.target).map(|(p, t)| (p - t).signum() / n).collect())
    }
    fn near_kink(&self, x: &[f64], i: usize, h: f64) -> bool {
        (x[i] - self.target[i]).abs() <= h
    }
}

/// Total generator loss over `x = [l_rec, l_gg, l_gv]`.
pub struct GeneratorTotalFn {
    pub cfg: LossConfig,
}

impl Differentiable for GeneratorTotalFn {
    fn name(&self) -> &str {
        "generator_total_loss"
    }
    fn eval(&self, x: &[f64]) -> Result<f64, DoveError> {
        generator_total_loss(x[0], x[1], x[2], self.cfg)
    }
    fn grad(&self, _x: &[f64]) -> Result<Vec<f64>, DoveError> {
        Ok(vec![1.0, self.cfg.lambda, self.cfg.lambda])
    }
    fn is_linear(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_ops_are_tight() {
        let x = [0.3, -1.2, 2.0, 0.7, 1.5, -0.4];
        let r = grad_check(&DomainSimilarityFn { dim: 3 }, &x, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        let r = grad_check(&GeneratorTotalFn { cfg: LossConfig::default() }, &[1.0, -2.0, -3.0], 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        let r = grad_check(&HingeGFn, &[0.1, 0.5, -0.9], 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn kinks_are_excluded() {
        let r = grad_check(&HingeDFn { n_real: 2 }, &[1.0, 0.2, -1.0, 0.5], 1e-5).unwrap();
        assert_eq!(r.excluded, 2);
        assert!(r.max_rel_error < 1e-6);
        let f = ReconstructionFn { target: vec![0.5, 0.5] };
        let r = grad_check(&f, &[0.5, 0.9], 1e-5).unwrap();
        assert_eq!((r.checked, r.excluded), (1, 1));
    }

    #[test]
    fn step_bounds() {
        assert!(grad_check(&HingeGFn, &[0.0], 1e-2).is_err());
        assert!(grad_check(&HingeGFn, &[0.0], 1e-7).is_err());
    }

    #[test]
    fn wrong_gradient_is_detected() {
        struct Bad;
        impl Differentiable for Bad {
            fn name(&self) -> &str {
                "bad"
            }
            fn eval(&self, x: &[f64]) -> Result<f64, DoveError> {
                Ok(x[0] * x[0])
            }
            fn grad(&self, x: &[f64]) -> Result<Vec<f64>, DoveError> {
                Ok(vec![x[0]])
            }
        }
        assert!(grad_check(&Bad, &[1.0], 1e-4).unwrap().max_rel_error > 0.4);
    }
}
