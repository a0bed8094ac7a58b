use std::path::Path;

use super::{CompositeRecord, FilterVerdict, SynthError};
use crate::config::RunConfig;
use crate::imgcore::{foreground_ratio, read_image, read_mask, rgb_to_hsv, to_u8, Image, Mask};

pub const RATIO_FILTER: &str = "ratio_bounds";
pub const HUE_FILTER: &str = "hue_shift";
pub const CLIP_FILTER: &str = "clipping";

/// Thresholds for the automatic filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub hue_threshold_deg: f64,
    /// Pixels at or below this saturation are ignored by the hue filter.
    pub hue_min_saturation: f64,
    pub clip_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::from(&RunConfig::default())
    }
}

impl From<&RunConfig> for FilterConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            ratio_min: c.ratio_min,
            ratio_max: c.ratio_max,
            hue_threshold_deg: c.hue_threshold_deg,
            hue_min_saturation: c.hue_min_saturation,
            clip_threshold: c.clip_threshold,
        }
    }
}

/// Circular mean hue in degrees of the foreground pixels whose saturation exceeds `min_saturation`.
pub fn circular_mean_hue(img: &Image, mask: &Mask, min_saturation: f64) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for i in mask.foreground_indices() {
        let [h, sat, _] = rgb_to_hsv(img.pixel(i));
        if sat > min_saturation {
            let r = h.to_radians();
            s += r.sin();
            c += r.cos();
            n += 1;
        }
    }
    if n == 0 || (s == 0.0 && c == 0.0) {
        return None;
    }
    Some(s.atan2(c).to_degrees().rem_euclid(360.0))
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Foreground pixels that sit on the 8-bit gamut boundary in the composite
/// but not in the real image, as a fraction of the foreground.
fn clipped_fraction(composite: &Image, real: &Image, mask: &Mask) -> f64 {
    let n = mask.foreground_count();
    if n == 0 {
        return 0.0;
    }
    let clipped = mask
        .foreground_indices()
        .filter(|&i| {
            let c = composite.pixel(i).map(to_u8);
            let r = real.pixel(i).map(to_u8);
            (0..3).any(|k| (c[k] == 0 || c[k] == 255) && c[k] != r[k])
        })
        .count();
    clipped as f64 / n as f64
}

/// Run the ratio, hue-shift and clipping filters on in-memory images.
pub fn filter_images(composite: &Image, real: &Image, mask: &Mask, cfg: &FilterConfig) -> Result<Vec<FilterVerdict>, SynthError> {
    composite.ensure_same_size(real.width(), real.height())?;
    mask.ensure_matches(real)?;
    let ratio = foreground_ratio(mask)?;
    let hue_shift = match (
        circular_mean_hue(composite, mask, cfg.hue_min_saturation),
        circular_mean_hue(real, mask, cfg.hue_min_saturation),
    ) {
        (Some(a), Some(b)) => angular_distance(a, b),
        _ => 0.0,
    };
    let clip = clipped_fraction(composite, real, mask);
    Ok(vec![
        FilterVerdict {
            filter_name: RATIO_FILTER.into(),
            pass: ratio > cfg.ratio_min && ratio < cfg.ratio_max,
            score: ratio,
        },
        FilterVerdict { filter_name: HUE_FILTER.into(), pass: hue_shift <= cfg.hue_threshold_deg, score: hue_shift },
        FilterVerdict { filter_name: CLIP_FILTER.into(), pass: clip <= cfg.clip_threshold, score: clip },
    ])
}

/// Run every automatic filter for a record whose files live under `root`.
pub fn heuristic_filter(record: &CompositeRecord, root: &Path, cfg: &FilterConfig) -> Result<Vec<FilterVerdict>, SynthError> {
    let composite = read_image(root.join(&record.composite_path))?;
    let real = read_image(root.join(&record.real_path))?;
    let mask = read_mask(root.join(&record.mask_path))?;
    filter_images(&composite, &real, &mask, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::hsv_to_rgb;

    fn scene() -> (Image, Mask) {
        let img = Image::from_fn(32, 32, |x, y| {
            hsv_to_rgb([(x * 3 + y) as f64 % 40.0 + 10.0, 0.6 + 0.01 * (y % 10) as f64, 0.7])
        });
        (img, Mask::from_fn(32, 32, |x, y| (8..24).contains(&x) && (8..24).contains(&y)))
    }

    fn verdict<'a>(v: &'a [FilterVerdict], name: &str) -> &'a FilterVerdict {
        v.iter().find(|f| f.filter_name == name).unwrap()
    }

    #[test]
    fn identical_composite_passes_everything() {
        let (img, mask) = scene();
        let v = filter_images(&img, &img, &mask, &FilterConfig::default()).unwrap();
        assert!(v.iter().all(|f| f.pass), "{v:?}");
        assert_eq!(verdict(&v, HUE_FILTER).score, 0.0);
        assert_eq!(verdict(&v, CLIP_FILTER).score, 0.0);
    }

    #[test]
    fn rotated_hue_fails() {
        let (real, mask) = scene();
        let mut comp = real.clone();
        for i in mask.foreground_indices() {
            let [h, s, v] = rgb_to_hsv(real.pixel(i));
            comp.set_pixel(i, hsv_to_rgb([h + 120.0, s, v]));
        }
        let v = filter_images(&comp, &real, &mask, &FilterConfig::default()).unwrap();
        let hue = verdict(&v, HUE_FILTER);
        assert!(!hue.pass);
        assert!((hue.score - 120.0).abs() < 1e-6, "{}", hue.score);
    }

    #[test]
    fn small_ratio_fails() {
        let img = Image::filled(200, 100, [0.5; 3]);
        // 100 of 20000 pixels = 0.005
        let mask = Mask::from_fn(200, 100, |x, y| x < 10 && y < 10);
        let v = filter_images(&img, &img, &mask, &FilterConfig::default()).unwrap();
        let r = verdict(&v, RATIO_FILTER);
        assert_eq!(r.score, 0.005);
        assert!(!r.pass);
    }

    #[test]
    fn saturated_foreground_fails_clip() {
        let (real, mask) = scene();
        let mut comp = real.clone();
        for i in mask.foreground_indices().take(mask.foreground_count() / 5) {
            comp.set_pixel(i, [1.0, 1.0, 1.0]);
        }
        let v = filter_images(&comp, &real, &mask, &FilterConfig::default()).unwrap();
        let c = verdict(&v, CLIP_FILTER);
        assert!(!c.pass && (c.score - 0.2).abs() < 0.01);
    }

    #[test]
    fn hue_wraps_around() {
        assert_eq!(angular_distance(350.0, 10.0), 20.0);
        assert_eq!(angular_distance(10.0, 350.0), 20.0);
    }
}
