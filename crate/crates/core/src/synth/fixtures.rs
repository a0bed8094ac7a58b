//! Procedural source datasets for demos and tests.
//!
//! Transfer-mode sources are independent scenes with one elliptical
//! foreground object each, spread over a few categories. Aligned-mode sources
//! are several captures of one scene under different global lighting, sharing
//! a mask and a `scene_id`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{write_sources, SourceRecord, SynthError};
use crate::imgcore::{hsv_to_rgb, write_image, write_mask, Image, Mask};

pub const CATEGORIES: [&str; 3] = ["apple", "kite", "car"];

#[derive(Debug, Clone, Copy)]
pub struct DemoSpec {
    pub width: usize,
    pub height: usize,
    pub transfer_targets: usize,
    pub scenes: usize,
    pub captures_per_scene: usize,
    pub seed: u64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self { width: 64, height: 48, transfer_targets: 9, scenes: 2, captures_per_scene: 3, seed: 7 }
    }
}

/// Smooth textured scene with a saturated elliptical object.
pub fn demo_scene(rng: &mut impl Rng, width: usize, height: usize) -> (Image, Mask) {
    let bg_top = hsv_to_rgb([rng.random_range(0.0..360.0), rng.random_range(0.2..0.6), rng.random_range(0.5..0.9)]);
    let bg_bottom = hsv_to_rgb([rng.random_range(0.0..360.0), rng.random_range(0.2..0.6), rng.random_range(0.3..0.7)]);
    let obj = [rng.random_range(0.0..360.0), rng.random_range(0.4..0.8), rng.random_range(0.45..0.8)];
    let cx = rng.random_range(0.35..0.65) * width as f64;
    let cy = rng.random_range(0.35..0.65) * height as f64;
    let rx = rng.random_range(0.15..0.3) * width as f64;
    let ry = rng.random_range(0.15..0.3) * height as f64;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let inside = |x: usize, y: usize| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    };
    let img = Image::from_fn(width, height, |x, y| {
        let t = y as f64 / (height - 1).max(1) as f64;
        if inside(x, y) {
            let shade = 0.12 * ((x as f64 * 0.4 + phase).sin() + (y as f64 * 0.3).cos()) / 2.0;
            let [h, s, v] = obj;
            hsv_to_rgb([h + 10.0 * shade.signum() * shade.abs().sqrt(), s, (v + shade).clamp(0.0, 1.0)])
        } else {
            let ripple = 0.03 * ((x as f64 * 0.2 + y as f64 * 0.15 + phase).sin());
            std::array::from_fn(|c| (bg_top[c] * (1.0 - t) + bg_bottom[c] * t + ripple).clamp(0.0, 1.0))
        }
    });
    (img, Mask::from_fn(width, height, inside))
}

fn relight(img: &Image, gain: [f64; 3], lift: f64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get(x, y);
        std::array::from_fn(|c| (p[c] * gain[c] + lift).clamp(0.0, 1.0))
    })
}

/// Write demo images, masks and `sources.jsonl` into `dir`.
pub fn write_demo_sources(dir: &Path, spec: &DemoSpec) -> Result<Vec<SourceRecord>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    std::fs::create_dir_all(dir).map_err(super::io_err(dir))?;
    let mut out = Vec::new();
    let mut save = |id: String, img: &Image, mask: &Mask, category: &str, scene: Option<String>, sub: &str| {
        let image_path = format!("images/{id}.png");
        let mask_path = format!("masks/{id}.png");
        write_image(dir.join(&image_path), img)?;
        write_mask(dir.join(&mask_path), mask)?;
        out.push(SourceRecord {
            id,
            image_path: image_path.into(),
            mask_path: mask_path.into(),
            category_label: category.to_string(),
            scene_id: scene,
            sub_dataset: Some(sub.to_string()),
        });
        Ok::<_, SynthError>(())
    };

    for i in 0..spec.transfer_targets {
        let (img, mask) = demo_scene(&mut rng, spec.width, spec.height);
        save(format!("t{i:03}"), &img, &mask, CATEGORIES[i % CATEGORIES.len()], None, "transfer")?;
    }
    for s in 0..spec.scenes {
        let (base, mask) = demo_scene(&mut rng, spec.width, spec.height);
        for c in 0..spec.captures_per_scene {
            let gain = std::array::from_fn(|_| rng.random_range(0.55..1.1));
            let lift = rng.random_range(-0.05..0.05);
            let img = if c == 0 { base.clone() } else { relight(&base, gain, lift) };
            save(format!("s{s:02}c{c}"), &img, &mask, "building", Some(format!("scene{s:02}")), "aligned")?;
        }
    }
    // Paths in the file stay relative to `dir`.
    write_sources(dir.join("sources.jsonl"), &out)?;
    Ok(out.into_iter().map(|mut r| {
        r.image_path = dir.join(&r.image_path);
        r.mask_path = dir.join(&r.mask_path);
        r
    }).collect())
}

/// Random foreground pair drawn well inside the RGB cube, for transfer experiments.
pub fn random_pair(seed: u64, width: usize, height: usize) -> (Image, Mask, Image, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = |rng: &mut ChaCha8Rng| {
        let center: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.65));
        let mix: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-0.12..0.12)));
        let seed: u64 = rng.random();
        let mut local = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(width, height, move |_, _| {
            let z: [f64; 3] = std::array::from_fn(|_| local.random_range(-1.0..1.0));
            std::array::from_fn(|c| (center[c] + (0..3).map(|k| mix[c][k] * z[k]).sum::<f64>()).clamp(0.0, 1.0))
        })
    };
    let target = cloud(&mut rng);
    let reference = cloud(&mut rng);
    let (a, b) = (rng.random_range(0.2..0.5), rng.random_range(0.2..0.5));
    let t_mask = Mask::from_fn(width, height, |x, _| (x as f64) < a * width as f64 + 2.0);
    let r_mask = Mask::from_fn(width, height, |_, y| (y as f64) >= b * height as f64);
    (target, t_mask, reference, r_mask)
}
