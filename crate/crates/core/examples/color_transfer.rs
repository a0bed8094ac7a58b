//! Recolor one foreground with each of the four transfer methods.
//!
//!     cargo run --example color_transfer [-- OUT_DIR]
//!
//! Prints foreground means before and after; with OUT_DIR, writes PNGs.

use harmonize::imgcore::{masked_moments, write_image, write_mask};
use harmonize::synth::fixtures::demo_scene;
use harmonize::transfer::TransferMethod;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let out_dir = std::env::args().nth(1).map(std::path::PathBuf::from);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (target, t_mask) = demo_scene(&mut rng, 96, 72);
    let (reference, r_mask) = demo_scene(&mut rng, 96, 72);

    let fmt = |m: [f64; 3]| format!("({:.3}, {:.3}, {:.3})", m[0], m[1], m[2]);
    println!("target fg mean    {}", fmt(masked_moments(&target, &t_mask)?.mean));
    println!("reference fg mean {}", fmt(masked_moments(&reference, &r_mask)?.mean));

    let methods = [
        TransferMethod::ReinhardLab,
        TransferMethod::XiaoRgb,
        TransferMethod::FeckerHist { bins: 256 },
        TransferMethod::PitieIdt { iters: 10, seed: 5 },
    ];
    for method in methods {
        let out = method.apply(&target, &t_mask, &reference, &r_mask)?;
        let stats = masked_moments(&out.image, &t_mask)?;
        println!(
            "{:<13} fg mean {}  clamped {:.1}%",
            method.tag().as_str(),
            fmt(stats.mean),
            100.0 * out.clamp_fraction
        );
        if let Some(dir) = &out_dir {
            write_image(dir.join(format!("{}.png", method.tag().as_str().to_lowercase())), &out.image)?;
        }
    }
    if let Some(dir) = &out_dir {
        write_image(dir.join("target.png"), &target)?;
        write_image(dir.join("reference.png"), &reference)?;
        write_mask(dir.join("mask.png"), &t_mask)?;
        println!("wrote images to {}", dir.display());
    }
    Ok(())
}
