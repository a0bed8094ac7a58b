use std::sync::LazyLock;

use nalgebra::{Matrix3, Vector3};

use super::{ColorSpace, Image, ImageError};

/// Offset added to LMS responses before the log so black pixels stay finite.
pub const LMS_EPSILON: f64 = 1.0 / (255.0 * 255.0);

// Reinhard's RGB -> LMS matrix with each row scaled to sum to one, so the
// neutral axis R = G = B lands on L = M = S (alpha = beta = 0).
static RGB_TO_LMS: LazyLock<Matrix3<f64>> = LazyLock::new(|| {
    let raw = Matrix3::new(
        0.3811, 0.5783, 0.0402, //
        0.1967, 0.7244, 0.0782, //
        0.0241, 0.1288, 0.8444,
    );
    let mut m = raw;
    for r in 0..3 {
        let sum: f64 = raw.row(r).sum();
        for c in 0..3 {
            m[(r, c)] = raw[(r, c)] / sum;
        }
    }
    m
});

static LMS_TO_RGB: LazyLock<Matrix3<f64>> =
    LazyLock::new(|| RGB_TO_LMS.try_inverse().expect("LMS matrix is invertible"));

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT6: f64 = 2.449_489_742_783_178;
const SQRT2: f64 = std::f64::consts::SQRT_2;

fn rgb_to_lab_px(p: [f64; 3]) -> [f64; 3] {
    let lms = *RGB_TO_LMS * Vector3::from(p);
    let l = (lms[0] + LMS_EPSILON).log10();
    let m = (lms[1] + LMS_EPSILON).log10();
    let s = (lms[2] + LMS_EPSILON).log10();
    [(l + m + s) / SQRT3, (l + m - 2.0 * s) / SQRT6, (l - m) / SQRT2]
}

fn lab_to_rgb_px(p: [f64; 3]) -> [f64; 3] {
    let [lum, alpha, beta] = p;
    let a = lum / SQRT3;
    let b = alpha / SQRT6;
    let c = beta / SQRT2;
    let lms = Vector3::new(
        10f64.powf(a + b + c) - LMS_EPSILON,
        10f64.powf(a + b - c) - LMS_EPSILON,
        10f64.powf(a - 2.0 * b) - LMS_EPSILON,
    );
    let rgb = *LMS_TO_RGB * lms;
    [rgb[0], rgb[1], rgb[2]]
}

fn rgb_to_ycbcr_px([r, g, b]: [f64; 3]) -> [f64; 3] {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    [y, 0.5 + (b - y) / 1.772, 0.5 + (r - y) / 1.402]
}

fn ycbcr_to_rgb_px([y, cb, cr]: [f64; 3]) -> [f64; 3] {
    let r = y + 1.402 * (cr - 0.5);
    let b = y + 1.772 * (cb - 0.5);
    let g = (y - 0.299 * r - 0.114 * b) / 0.587;
    [r, g, b]
}

/// Convert between RGB and one of the decorrelated spaces.
///
/// Only RGB <-> Lab and RGB <-> YCbCr are supported; a same-space request
/// returns an identical copy.
pub fn convert_color_space(img: &Image, target: ColorSpace) -> Result<Image, ImageError> {
    use ColorSpace::*;
    let from = img.space();
    if from == target {
        return Ok(img.clone());
    }
    let f: fn([f64; 3]) -> [f64; 3] = match (from, target) {
        (Rgb, Lab) => rgb_to_lab_px,
        (Lab, Rgb) => lab_to_rgb_px,
        (Rgb, YCbCr) => rgb_to_ycbcr_px,
        (YCbCr, Rgb) => ycbcr_to_rgb_px,
        _ => return Err(ImageError::UnsupportedConversion { from, to: target }),
    };
    let mut out = img.clone().with_space(target);
    for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
        let v = f([px[0], px[1], px[2]]);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        px.copy_from_slice(&v);
    }
    Ok(out)
}

/// HSV of one RGB pixel: hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    [h.rem_euclid(360.0), s, max]
}

/// Inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}
