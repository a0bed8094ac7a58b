//! Rank methods from simulated pairwise preferences.
//!
//!     cargo run --example bradley_terry

use harmonize::btrank::{fit_bradley_terry, predict_win_prob, ComparisonMatrix, FitOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let methods = ["composite", "lalonde", "xue", "zhu", "dih", "s2am", "dovenet"];
    let worth = [1.0, 1.3, 1.5, 1.4, 2.6, 2.9, 3.6];
    let mut m = ComparisonMatrix::new(methods.iter().map(|s| s.to_string()).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            for _ in 0..25 * 99 {
                let p = worth[i] / (worth[i] + worth[j]);
                if rng.random_bool(p) {
                    m.record(methods[i], methods[j])?;
                } else {
                    m.record(methods[j], methods[i])?;
                }
            }
        }
    }
    let scores = fit_bradley_terry(&m, FitOptions::default())?;
    println!("{} comparisons, {} MM iterations", m.total(), scores.iterations);
    print!("{}", scores.to_table());
    println!("P(dovenet beats s2am) = {:.3}", predict_win_prob(&scores, "dovenet", "s2am")?);
    println!("P(composite beats lalonde) = {:.3}", predict_win_prob(&scores, "composite", "lalonde")?);
    Ok(())
}
