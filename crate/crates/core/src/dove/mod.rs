//! Reference kernels for the domain-verification discriminator.
//!
//! Forward passes and analytic gradients over small CHW tensors, used to
//! verify masking, loss and normalization behavior. No training loop.

pub mod check;
mod gradcheck;
mod layers;
mod losses;
mod pconv;

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::imgcore::{Image, Mask};

pub use gradcheck::{
    grad_check, Differentiable, DomainSimilarityFn, GeneratorTotalFn, GradCheck, HingeDFn, HingeGFn, ReconstructionFn,
};
pub use layers::{attention_block, instance_norm, leaky_relu, sigmoid, spectral_normalize, Attention, SpectralNorm};
pub use losses::{
    domain_similarity, generator_total_loss, hinge_d_loss, hinge_g_loss, reconstruction_loss, LossConfig, LossReport,
    DEFAULT_LAMBDA,
};
pub use pconv::{extract_domain_reps, partial_conv, DomainReps, Extractor, LEAKY_SLOPE};

#[derive(Debug, thiserror::Error)]
pub enum DoveError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate mask: {0}")]
    DegenerateMask(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad weights file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

/// Dense `channels × height × width` tensor, row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, DoveError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(DoveError::Shape(format!("zero dimension {channels}×{height}×{width}")));
        }
        if data.len() != channels * height * width {
            return Err(DoveError::Shape(format!(
                "{} values for {channels}×{height}×{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DoveError::NonFinite("feature map"));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    /// Three-channel map of an RGB image.
    pub fn from_image(img: &Image) -> Self {
        Self::from_fn(3, img.height(), img.width(), |c, y, x| img.get(x, y)[c])
    }

    /// One-channel 0/1 map of a mask.
    pub fn from_mask(mask: &Mask) -> Self {
        Self::from_fn(1, mask.height(), mask.width(), |_, y, x| if mask.get(x, y) { 1.0 } else { 0.0 })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    /// Stack along the channel axis.
    pub fn concat(&self, other: &Self) -> Result<Self, DoveError> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(DoveError::Shape(format!(
                "spatial {}×{} vs {}×{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { channels: self.channels + other.channels, data, ..*self })
    }

    /// Mirror along the width axis.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.channels, self.height, self.width, |c, y, x| self.get(c, y, self.width - 1 - x))
    }
}

/// Convolution kernels `out × in × kh × kw` and one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        kernels: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, DoveError> {
        if out_channels == 0 || in_channels == 0 || kh == 0 || kw == 0 {
            return Err(DoveError::Shape("zero kernel dimension".into()));
        }
        if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(DoveError::Shape(format!("kernel {kh}×{kw} must be odd")));
        }
        if kernels.len() != out_channels * in_channels * kh * kw || bias.len() != out_channels {
            return Err(DoveError::Shape(format!(
                "{} kernel values / {} biases for {out_channels}×{in_channels}×{kh}×{kw}",
                kernels.len(),
                bias.len()
            )));
        }
        if kernels.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(DoveError::NonFinite("conv weights"));
        }
        Ok(Self { out_channels, in_channels, kh, kw, kernels, bias })
    }

    /// Same value everywhere.
    pub fn constant(out_channels: usize, in_channels: usize, kh: usize, kw: usize, value: f64, bias: f64) -> Self {
        Self {
            out_channels,
            in_channels,
            kh,
            kw,
            kernels: vec![value; out_channels * in_channels * kh * kw],
            bias: vec![bias; out_channels],
        }
    }

    /// He-normal kernels and small normal biases from a seeded stream.
    pub fn he_normal(out_channels: usize, in_channels: usize, kh: usize, kw: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = (2.0 / (in_channels * kh * kw) as f64).sqrt();
        let mut draw = |s: f64| -> f64 { s * Distribution::<f64>::sample(&StandardNormal, &mut rng) };
        let kernels = (0..out_channels * in_channels * kh * kw).map(|_| draw(std)).collect();
        let bias = (0..out_channels).map(|_| draw(0.01)).collect();
        Self { out_channels, in_channels, kh, kw, kernels, bias }
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.kernels[((o * self.in_channels + i) * self.kh + ky) * self.kw + kx]
    }

    /// Write one section: header line `out in kh kw`, then little-endian f32
    /// kernels followed by biases.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {} {}", self.out_channels, self.in_channels, self.kh, self.kw)?;
        for v in self.kernels.iter().chain(&self.bias) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save(path: impl AsRef<Path>, stack: &[ConvWeights]) -> Result<(), DoveError> {
        let path = path.as_ref();
        let io = |source| DoveError::Io { path: path.to_path_buf(), source };
        let mut buf = Vec::new();
        for w in stack {
            w.write_to(&mut buf).map_err(io)?;
        }
        std::fs::write(path, buf).map_err(io)
    }

    /// Read every section of a weights file.
    pub fn load(path: impl AsRef<Path>) -> Result<Vec<ConvWeights>, DoveError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DoveError::Io { path: path.to_path_buf(), source })?;
        let bad = |reason: String| DoveError::Format { path: path.to_path_buf(), reason };
        let mut reader = BufReader::new(file);
        let mut stack = Vec::new();
        loop {
            let mut header = String::new();
            let n = reader
                .read_line(&mut header)
                .map_err(|source| DoveError::Io { path: path.to_path_buf(), source })?;
            if n == 0 {
                break;
            }
            let dims: Vec<usize> = header
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(format!("header `{}`", header.trim())))?;
            let [o, i, kh, kw] = dims[..] else {
                return Err(bad(format!("header `{}` needs four fields", header.trim())));
            };
            let count = o * i * kh * kw + o;
            let mut bytes = vec![0u8; count * 4];
            reader
                .read_exact(&mut bytes)
                .map_err(|_| bad(format!("section {} truncated", stack.len())))?;
            let values: Vec<f64> =
                bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
            let (k, b) = values.split_at(o * i * kh * kw);
            stack.push(ConvWeights::new(o, i, kh, kw, k.to_vec(), b.to_vec()).map_err(|e| bad(e.to_string()))?);
        }
        if stack.is_empty() {
            return Err(bad("no sections".into()));
        }
        Ok(stack)
    }
}
