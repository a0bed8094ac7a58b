//! Self-check suite behind `harmonize kernels-check`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::imgcore::{Image, Mask};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<String, String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome { name, passed: true, detail },
        Err(detail) => CheckOutcome { name, passed: false, detail },
    }
}

fn err(e: DoveError) -> String {
    e.to_string()
}

/// Perturb every masked-out entry of seeded 5×5 inputs and require
/// bit-identical outputs.
pub fn check_no_leakage(seed: u64, masks: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = ConvWeights::he_normal(4, 2, 3, 3, seed);
    let mut perturbations = 0usize;
    for _ in 0..masks {
        let input = FeatureMap::from_fn(2, 5, 5, |_, _, _| rng.random_range(-1.0..1.0));
        let mask = FeatureMap::from_fn(1, 5, 5, |_, _, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        for stride in [1, 2] {
            let (base, base_mask) = partial_conv(&input, &mask, &w, stride).map_err(err)?;
            for c in 0..2 {
                for y in 0..5 {
                    for x in 0..5 {
                        if mask.get(0, y, x) == 1.0 {
                            continue;
                        }
                        for v in [0.0, -7.5, 1e6, rng.random_range(-1.0..1.0)] {
                            let mut p = input.clone();
                            p.set(c, y, x, v);
                            let (out, um) = partial_conv(&p, &mask, &w, stride).map_err(err)?;
                            let same = out.data().iter().zip(base.data()).all(|(a, b)| a.to_bits() == b.to_bits());
                            if !same || um != base_mask {
                                return Err(format!("output changed when perturbing ({c},{y},{x})"));
                            }
                            perturbations += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{perturbations} perturbations, outputs bit-identical"))
}

/// Redraw the background `redraws` times and require an identical `l_f`.
pub fn check_foreground_invariance(seed: u64, redraws: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (24, 20);
    let img = Image::from_fn(w, h, |_, _| std::array::from_fn(|_| rng.random_range(0.0..1.0)));
    let mask = Mask::from_fn(w, h, |x, y| (x as f64 - 11.0).powi(2) + (y as f64 - 9.0).powi(2) < 36.0);
    let ex = Extractor::seeded(seed);
    let base = extract_domain_reps(&img, &mask, &ex).map_err(err)?;
    for k in 0..redraws {
        let redrawn = Image::from_fn(w, h, |x, y| {
            if mask.get(x, y) { img.get(x, y) } else { std::array::from_fn(|_| rng.random_range(0.0..1.0)) }
        });
        let reps = extract_domain_reps(&redrawn, &mask, &ex).map_err(err)?;
        if reps.foreground.iter().zip(&base.foreground).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(format!("l_f changed on redraw {k}"));
        }
    }
    Ok(format!("l_f identical over {redraws} background redraws"))
}

fn check_loss_examples() -> Result<String, String> {
    let cfg = LossConfig::default();
    let cases: [(&str, f64, f64); 9] = [
        ("hinge_d(1,-1)", hinge_d_loss(&[1.0], &[-1.0]).map_err(err)?, 0.0),
        ("hinge_d(0,0)", hinge_d_loss(&[0.0], &[0.0]).map_err(err)?, 2.0),
        ("hinge_d(-1,1)", hinge_d_loss(&[-1.0], &[1.0]).map_err(err)?, 4.0),
        ("hinge_g(0)", hinge_g_loss(&[0.0]).map_err(err)?, 0.0),
        ("hinge_g(0.5)", hinge_g_loss(&[0.5]).map_err(err)?, -0.5),
        ("hinge_g(1,-1)", hinge_g_loss(&[1.0, -1.0]).map_err(err)?, 0.0),
        ("total(1,-2,-3)", generator_total_loss(1.0, -2.0, -3.0, cfg).map_err(err)?, 0.95),
        ("similarity", domain_similarity(&[1.0, 2.0], &[3.0, 4.0]).map_err(err)?, 11.0),
        ("rec half", reconstruction_loss(&[0.5, 0.5, 0.0, 0.0], &[0.0; 4]).map_err(err)?, 0.25),
    ];
    for (name, got, want) in cases {
        // 0.95 is not exactly representable as 1 + 0.01·(−5).
        if (got - want).abs() > 1e-15 {
            return Err(format!("{name}: {got} != {want}"));
        }
    }
    Ok(format!("{} loss examples", cases.len()))
}

/// Gradient check of every loss op at seeded points away from kinks:
/// `(name, is_linear, result)`.
pub fn gradient_report(seed: u64) -> Result<Vec<(String, bool, GradCheck)>, DoveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let target = draw(12);
    let fns: Vec<(Box<dyn Differentiable>, Vec<f64>)> = vec![
        (Box::new(DomainSimilarityFn { dim: 8 }), draw(16)),
        (Box::new(HingeDFn { n_real: 5 }), draw(9)),
        (Box::new(HingeGFn), draw(6)),
        (Box::new(ReconstructionFn { target }), draw(12)),
        (Box::new(GeneratorTotalFn { cfg: LossConfig::default() }), draw(3)),
    ];
    fns.iter()
        .map(|(f, x)| Ok((f.name().to_string(), f.is_linear(), grad_check(f.as_ref(), x, 1e-4)?)))
        .collect()
}

/// Linear ops must agree to 1e-8, the rest to 1e-3.
pub fn check_gradients(seed: u64) -> Result<String, String> {
    let report = gradient_report(seed).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (name, linear, r) in &report {
        let bound = if *linear { 1e-8 } else { 1e-3 };
        if r.max_rel_error >= bound {
            return Err(format!("{name}: relative error {:.3e} >= {bound:e}", r.max_rel_error));
        }
        worst = worst.max(r.max_rel_error);
    }
    Ok(format!("{} functions, worst relative error {worst:.2e}", report.len()))
}

/// Normalize seeded Gaussian matrices and compare against a full SVD.
pub fn check_spectral(seed: u64, matrices: usize, iters: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..matrices {
        let w = DMatrix::from_fn(8, 8, |_, _| StandardNormal.sample(&mut rng));
        let s = spectral_normalize(&w, iters, seed.wrapping_add(k as u64)).map_err(err)?;
        let top = s.matrix.singular_values().max();
        worst = worst.max((top - 1.0).abs());
    }
    if worst < 1e-3 {
        Ok(format!("{matrices} matrices, worst |σ_max − 1| = {worst:.2e}"))
    } else {
        Err(format!("worst |σ_max − 1| = {worst:.3e}"))
    }
}

fn check_layers(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = FeatureMap::from_fn(4, 6, 6, |_, _, _| rng.random_range(-2.0..2.0));
    let dec = FeatureMap::from_fn(4, 6, 6, |_, _, _| rng.random_range(-2.0..2.0));
    let zero = ConvWeights::constant(1, 8, 1, 1, 0.0, 0.0);
    let half = attention_block(&enc, &dec, &zero, &zero).map_err(err)?;
    if half.output != enc.concat(&dec).map_err(err)?.map(|v| 0.5 * v) {
        return Err("zero-weight attention is not 0.5·[enc ; dec]".into());
    }
    let wild = ConvWeights::he_normal(4, 8, 1, 1, seed).clone();
    let mut wild = wild;
    wild.kernels.iter_mut().for_each(|k| *k *= 1e3);
    let a = attention_block(&enc, &dec, &wild, &wild).map_err(err)?;
    if !a.enc_map.data().iter().chain(a.dec_map.data()).all(|&v| v > 0.0 && v < 1.0) {
        return Err("attention map left (0, 1)".into());
    }
    let normed = instance_norm(&enc, 1e-5).map_err(err)?;
    for c in 0..normed.channels() {
        let ch = normed.channel(c);
        let n = ch.len() as f64;
        let m = ch.iter().sum::<f64>() / n;
        let v = ch.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        if m.abs() >= 1e-6 || !(1.0 - 1e-3..=1.0).contains(&v) {
            return Err(format!("instance norm channel {c}: mean {m:e}, var {v}"));
        }
    }
    Ok("attention gates and instance norm moments".into())
}

/// Run every kernel check with the given seed.
pub fn run_suite(seed: u64) -> Vec<CheckOutcome> {
    vec![
        outcome("partial_conv_no_leakage", check_no_leakage(seed, 20)),
        outcome("foreground_rep_invariance", check_foreground_invariance(seed, 100)),
        outcome("loss_examples", check_loss_examples()),
        outcome("gradients", check_gradients(seed)),
        outcome("spectral_norm", check_spectral(seed, 100, 50)),
        outcome("attention_and_instance_norm", check_layers(seed)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for o in run_suite(0) {
            assert!(o.passed, "{}: {}", o.name, o.detail);
        }
    }
}
