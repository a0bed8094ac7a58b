//! Core raster types shared by every other module.
//!
//! Pixels are stored as `f64` triples. RGB data lives in `[0, 1]`; the
//! decorrelated spaces (`Lab`, `YCbCr`) carry whatever range their transform
//! produces. Conversion to the 0-255 metric scale happens in [`crate::metrics`].

mod color;
mod io;
mod resize;
mod stats;

pub use color::{convert_color_space, hsv_to_rgb, rgb_to_hsv, LMS_EPSILON};
pub use io::{read_image, read_mask, write_image, write_mask, write_ppm};
pub use resize::{resize_bilinear, resize_mask_nearest};
pub use stats::{masked_moments, ChannelStats};
pub(crate) use stats::moments_of;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("buffer length {got} does not match {width}x{height}")]
    BadLength { width: usize, height: usize, got: usize },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("zero-area raster")]
    ZeroArea,
    #[error("unsupported color conversion {from:?} -> {to:?}")]
    UnsupportedConversion { from: ColorSpace, to: ColorSpace },
    #[error("non-finite value at pixel {0}")]
    NonFinite(usize),
    #[error("expected {expected:?} image, got {got:?}")]
    WrongSpace { expected: ColorSpace, got: ColorSpace },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("codec error on {path}: {message}")]
    Codec { path: String, message: String },
}

/// Color space tag carried by every [`Image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ColorSpace {
    Rgb,
    /// Reinhard's decorrelated log-LMS space (L, alpha, beta).
    Lab,
    /// Full-range BT.601.
    YCbCr,
}

/// Interleaved three-channel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
    space: ColorSpace,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>, space: ColorSpace) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::BadLength { width, height, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i / 3));
        }
        Ok(Self { width, height, data, space })
    }

    /// Constant RGB image.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data, space: ColorSpace::Rgb }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data, space: ColorSpace::Rgb }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let p = &self.data[index * 3..index * 3 + 3];
        [p[0], p[1], p[2]]
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel(y * self.width + x)
    }

    pub fn set_pixel(&mut self, index: usize, value: [f64; 3]) {
        self.data[index * 3..index * 3 + 3].copy_from_slice(&value);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub(crate) fn with_space(mut self, space: ColorSpace) -> Self {
        self.space = space;
        self
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn ensure_rgb(&self) -> Result<(), ImageError> {
        if self.space != ColorSpace::Rgb {
            return Err(ImageError::WrongSpace { expected: ColorSpace::Rgb, got: self.space });
        }
        Ok(())
    }

    pub fn ensure_same_size(&self, width: usize, height: usize) -> Result<(), ImageError> {
        if self.width != width || self.height != height {
            return Err(ImageError::DimensionMismatch(self.width, self.height, width, height));
        }
        Ok(())
    }

    /// Round to the 8-bit grid and back, the same way [`write_image`] stores pixels.
    pub fn quantized(&self) -> Self {
        let data = self.data.iter().map(|&v| f64::from(to_u8(v)) / 255.0).collect();
        Self { data, ..self.clone() }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(width, height, data, ColorSpace::Rgb)
    }
}

pub(crate) fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Strictly binary foreground mask; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BadLength { width, height, got: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn full(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    /// Threshold an 8-bit mask: values `>= 128` are foreground.
    pub fn from_gray8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::new(width, height, bytes.iter().map(|&b| b >= 128).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn is_foreground(&self, index: usize) -> bool {
        self.data[index]
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Background mask `1 - M`.
    pub fn complement(&self) -> Self {
        Self { data: self.data.iter().map(|b| !b).collect(), ..self.clone() }
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn ensure_matches(&self, image: &Image) -> Result<(), ImageError> {
        if self.width != image.width || self.height != image.height {
            return Err(ImageError::DimensionMismatch(self.width, self.height, image.width, image.height));
        }
        Ok(())
    }
}

/// Region substitution: reference pixels where the mask is set, target pixels elsewhere.
pub fn overlay_composite(target: &Image, reference: &Image, mask: &Mask) -> Result<Image, ImageError> {
    target.ensure_rgb()?;
    reference.ensure_rgb()?;
    reference.ensure_same_size(target.width, target.height)?;
    mask.ensure_matches(target)?;
    let mut out = target.clone();
    for i in mask.foreground_indices() {
        out.set_pixel(i, reference.pixel(i));
    }
    Ok(out)
}

/// Foreground area over image area.
pub fn foreground_ratio(mask: &Mask) -> Result<f64, ImageError> {
    let area = mask.width * mask.height;
    if area == 0 {
        return Err(ImageError::ZeroArea);
    }
    Ok(mask.foreground_count() as f64 / area as f64)
}
