use super::{ConvWeights, DoveError, FeatureMap};
use crate::imgcore::{Image, Mask};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Masked convolution with same padding `k/2` and the given stride.
///
/// `mask` has one channel (broadcast) or as many as `input`, entries 0 or 1.
/// Padding counts as mask 0. Each output site sums `w·x` over mask-1 inputs
/// only, rescales by `(C·kh·kw) / (mask sum)` and adds the bias; a window with
/// mask sum 0 yields 0. Returns the output and the one-channel updated mask.
pub fn partial_conv(
    input: &FeatureMap,
    mask: &FeatureMap,
    w: &ConvWeights,
    stride: usize,
) -> Result<(FeatureMap, FeatureMap), DoveError> {
    let (c_in, h, wd) = (input.channels(), input.height(), input.width());
    if w.in_channels != c_in {
        return Err(DoveError::Shape(format!("weights expect {} channels, input has {c_in}", w.in_channels)));
    }
    if (mask.height(), mask.width()) != (h, wd) || !(mask.channels() == 1 || mask.channels() == c_in) {
        return Err(DoveError::Shape(format!(
            "mask {}×{}×{} for input {c_in}×{h}×{wd}",
            mask.channels(),
            mask.height(),
            mask.width()
        )));
    }
    if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(DoveError::InvalidParameter("mask entries must be 0 or 1".into()));
    }
    if stride == 0 {
        return Err(DoveError::InvalidParameter("stride must be positive".into()));
    }
    let (ph, pw) = (w.kh / 2, w.kw / 2);
    let h_out = (h + 2 * ph - w.kh) / stride + 1;
    let w_out = (wd + 2 * pw - w.kw) / stride + 1;
    let window = (c_in * w.kh * w.kw) as f64;
    let mask_at = |c: usize, y: usize, x: usize| mask.get(if mask.channels() == 1 { 0 } else { c }, y, x);

    let mut out = FeatureMap::zeros(w.out_channels, h_out, w_out);
    let mut updated = FeatureMap::zeros(1, h_out, w_out);
    for oy in 0..h_out {
        for ox in 0..w_out {
            // Valid input taps of this window: (channel, y, x, ky, kx).
            let mut taps = Vec::with_capacity(c_in * w.kh * w.kw);
            for c in 0..c_in {
                for ky in 0..w.kh {
                    let Some(y) = (oy * stride + ky).checked_sub(ph).filter(|&y| y < h) else { continue };
                    for kx in 0..w.kw {
                        let Some(x) = (ox * stride + kx).checked_sub(pw).filter(|&x| x < wd) else { continue };
                        if mask_at(c, y, x) == 1.0 {
                            taps.push((c, y, x, ky, kx));
                        }
                    }
                }
            }
            if taps.is_empty() {
                continue;
            }
            let scale = window / taps.len() as f64;
            updated.set(0, oy, ox, 1.0);
            for o in 0..w.out_channels {
                let acc: f64 = taps.iter().map(|&(c, y, x, ky, kx)| w.weight(o, c, ky, kx) * input.get(c, y, x)).sum();
                out.set(o, oy, ox, acc * scale + w.bias[o]);
            }
        }
    }
    Ok((out, updated))
}

/// Stack of stride-2 partial convolutions with LeakyReLU between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    pub layers: Vec<ConvWeights>,
    pub stride: usize,
}

impl Extractor {
    /// Three 3×3 layers, 3→8→16→32 channels, He-normal weights.
    pub fn seeded(seed: u64) -> Self {
        let widths = [3, 8, 16, 32];
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| ConvWeights::he_normal(w[1], w[0], 3, 3, seed.wrapping_add(i as u64)))
            .collect();
        Self { layers, stride: 2 }
    }

    pub fn new(layers: Vec<ConvWeights>, stride: usize) -> Result<Self, DoveError> {
        if layers.is_empty() {
            return Err(DoveError::Empty("extractor layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(DoveError::Shape(format!(
                    "layer outputs {} channels, next expects {}",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        Ok(Self { layers, stride })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    /// Run the stack and average the last map over sites whose mask is 1.
    pub fn represent(&self, input: &FeatureMap, mask: &FeatureMap) -> Result<Vec<f64>, DoveError> {
        let (mut x, mut m) = (input.clone(), mask.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, um) = partial_conv(&x, &m, layer, self.stride)?;
            x = if i < last { y.map(leaky_relu) } else { y };
            m = um;
        }
        let valid: Vec<usize> = (0..m.data().len()).filter(|&i| m.data()[i] == 1.0).collect();
        if valid.is_empty() {
            return Err(DoveError::DegenerateMask("no valid site after the last layer"));
        }
        Ok((0..x.channels())
            .map(|c| {
                let ch = x.channel(c);
                valid.iter().map(|&i| ch[i]).sum::<f64>() / valid.len() as f64
            })
            .collect())
    }
}

fn leaky_relu(v: f64) -> f64 {
    super::leaky_relu(v, LEAKY_SLOPE)
}

/// Foreground and background representations `l_f`, `l_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainReps {
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
}

/// `l_f = F(I∘M, M)` and `l_b = F(I∘M̄, M̄)` with a shared extractor.
///
/// All-foreground or all-background masks are rejected.
pub fn extract_domain_reps(img: &Image, mask: &Mask, extractor: &Extractor) -> Result<DomainReps, DoveError> {
    mask.ensure_matches(img).map_err(|e| DoveError::Shape(e.to_string()))?;
    let fg = mask.foreground_count();
    if fg == 0 {
        return Err(DoveError::DegenerateMask("mask has no foreground"));
    }
    if fg == mask.data().len() {
        return Err(DoveError::DegenerateMask("mask has no background"));
    }
    let x = FeatureMap::from_image(img);
    let m = FeatureMap::from_mask(mask);
    let m_bar = FeatureMap::from_mask(&mask.complement());
    Ok(DomainReps { foreground: extractor.represent(&x, &m)?, background: extractor.represent(&x, &m_bar)? })
}
