use serde::{Deserialize, Serialize};

use super::{Image, ImageError, Mask};

/// Population moments of the foreground pixels of an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    pub pixel_count: usize,
}

/// Mean, standard deviation and covariance over mask-1 pixels (1/N normalization).
pub fn masked_moments(img: &Image, mask: &Mask) -> Result<ChannelStats, ImageError> {
    mask.ensure_matches(img)?;
    let n = mask.foreground_count();
    if n == 0 {
        return Err(ImageError::EmptyMask);
    }
    let pixels: Vec<[f64; 3]> = mask.foreground_indices().map(|i| img.pixel(i)).collect();
    Ok(moments_of(&pixels))
}

/// Moments of a non-empty pixel cloud.
pub(crate) fn moments_of(pixels: &[[f64; 3]]) -> ChannelStats {
    let n = pixels.len();
    let nf = n as f64;
    let mut mean = [0.0; 3];
    for p in pixels {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);

    // Two-pass form keeps the covariance accurate for near-constant channels.
    let mut cov = [[0.0; 3]; 3];
    for p in pixels {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in r..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in r..3 {
            cov[r][c] /= nf;
            cov[c][r] = cov[r][c];
        }
    }
    let std = [cov[0][0].sqrt(), cov[1][1].sqrt(), cov[2][2].sqrt()];
    ChannelStats { mean, std, covariance: cov, pixel_count: n }
}
