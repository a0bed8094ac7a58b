//! Foreground/background domain representations and the losses built on them.
//!
//!     cargo run --example domain_verification

use harmonize::dove::{
    domain_similarity, extract_domain_reps, grad_check, hinge_d_loss, spectral_normalize, DomainSimilarityFn, Extractor,
    LossConfig, LossReport,
};
use harmonize::imgcore::{Image, Mask};
use harmonize::synth::fixtures::demo_scene;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (real, mask) = demo_scene(&mut rng, 64, 48);
    let extractor = Extractor::seeded(11);

    // A real image against the same image with its foreground tinted blue.
    let tinted = Image::from_fn(64, 48, |x, y| {
        let p = real.get(x, y);
        if mask.get(x, y) { [p[0] * 0.4, p[1] * 0.6, (p[2] * 1.5).min(1.0)] } else { p }
    });
    let mut scores = Vec::new();
    for (name, img) in [("real", &real), ("tinted", &tinted)] {
        let reps = extract_domain_reps(img, &mask, &extractor)?;
        let s = domain_similarity(&unit(&reps.foreground), &unit(&reps.background))?;
        println!("{name:<7} |l_f| = {}  cosine(l_f, l_b) = {s:.4}", reps.foreground.len());
        scores.push(s);
    }
    println!("verification hinge loss (real vs tinted): {:.4}", hinge_d_loss(&scores[..1], &scores[1..])?);

    let report = LossReport::compute(0.12, (&[0.8], &[-0.3]), (&scores[..1], &scores[1..]), LossConfig::default())?;
    println!("{report:#?}");

    match extract_domain_reps(&real, &Mask::full(64, 48, true), &extractor) {
        Err(e) => println!("all-foreground mask: {e}"),
        Ok(_) => unreachable!(),
    }

    let w = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    let sn = spectral_normalize(&w, 50, 0)?;
    println!("sigma_max {:.4} -> {:.6}", sn.sigma, sn.matrix.singular_values().max());

    let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
    let g = grad_check(&DomainSimilarityFn { dim: 4 }, &x, 1e-4)?;
    println!("grad check of l_f . l_b: max relative error {:.2e}", g.max_rel_error);
    Ok(())
}
