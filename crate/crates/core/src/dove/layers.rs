use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ConvWeights, DoveError, FeatureMap};

/// Logit bound that keeps sigmoid outputs strictly inside (0, 1) in f64.
const LOGIT_BOUND: f64 = 36.0;

pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    if v >= 0.0 { v } else { slope * v }
}

/// Logistic function on logits clamped to ±36.
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_BOUND, LOGIT_BOUND);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn conv1x1(x: &FeatureMap, w: &ConvWeights) -> Result<FeatureMap, DoveError> {
    if w.kh != 1 || w.kw != 1 || w.in_channels != x.channels() {
        return Err(DoveError::Shape(format!(
            "1×1 conv with {} inputs expected, got {}×{} kernel over {} inputs",
            x.channels(),
            w.kh,
            w.kw,
            w.in_channels
        )));
    }
    let n = x.height() * x.width();
    let mut out = FeatureMap::zeros(w.out_channels, x.height(), x.width());
    for o in 0..w.out_channels {
        for i in 0..n {
            let v: f64 = (0..x.channels()).map(|c| w.weight(o, c, 0, 0) * x.channel(c)[i]).sum();
            out.data_mut()[o * n + i] = v + w.bias[o];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `[A_enc ∘ enc ; A_dec ∘ dec]`.
    pub output: FeatureMap,
    pub enc_map: FeatureMap,
    pub dec_map: FeatureMap,
}

fn gate(x: &FeatureMap, a: &FeatureMap) -> FeatureMap {
    let n = x.height() * x.width();
    FeatureMap::from_fn(x.channels(), x.height(), x.width(), |c, y, xx| {
        let ac = if a.channels() == 1 { 0 } else { c };
        x.get(c, y, xx) * a.data()[ac * n + y * x.width() + xx]
    })
}

/// Attention over concatenated skip and decoder features.
///
/// Each weight set is a 1×1 conv over `[enc ; dec]` producing one map (shared
/// across channels) or one map per channel of the gated tensor.
pub fn attention_block(
    enc: &FeatureMap,
    dec: &FeatureMap,
    w_enc: &ConvWeights,
    w_dec: &ConvWeights,
) -> Result<Attention, DoveError> {
    let both = enc.concat(dec)?;
    for (w, target) in [(w_enc, enc), (w_dec, dec)] {
        if w.out_channels != 1 && w.out_channels != target.channels() {
            return Err(DoveError::Shape(format!(
                "attention conv yields {} maps for {} channels",
                w.out_channels,
                target.channels()
            )));
        }
    }
    let enc_map = conv1x1(&both, w_enc)?.map(sigmoid);
    let dec_map = conv1x1(&both, w_dec)?.map(sigmoid);
    let output = gate(enc, &enc_map).concat(&gate(dec, &dec_map))?;
    Ok(Attention { output, enc_map, dec_map })
}

/// Per-channel `(x − mean) / sqrt(var + ε)` with population variance.
pub fn instance_norm(x: &FeatureMap, epsilon: f64) -> Result<FeatureMap, DoveError> {
    if !(epsilon > 0.0) {
        return Err(DoveError::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let n = (x.height() * x.width()) as f64;
    let mut out = x.clone();
    let plane = x.height() * x.width();
    for c in 0..x.channels() {
        let ch = x.channel(c);
        let mean = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + epsilon).sqrt();
        for (o, v) in out.data_mut()[c * plane..(c + 1) * plane].iter_mut().zip(ch) {
            *o = (v - mean) * inv;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNorm {
    pub matrix: DMatrix<f64>,
    /// Power-iteration estimate of the largest singular value.
    pub sigma: f64,
    /// Set when the input was the zero matrix and was returned unchanged.
    pub zero_matrix: bool,
}

/// `w / σ_max(w)` with σ_max from seeded power iteration.
pub fn spectral_normalize(w: &DMatrix<f64>, power_iters: usize, seed: u64) -> Result<SpectralNorm, DoveError> {
    if power_iters == 0 {
        return Err(DoveError::InvalidParameter("power_iters must be >= 1".into()));
    }
    if w.is_empty() {
        return Err(DoveError::Empty("matrix"));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(DoveError::NonFinite("matrix"));
    }
    let unchanged = || SpectralNorm { matrix: w.clone(), sigma: 0.0, zero_matrix: true };
    if w.iter().all(|&v| v == 0.0) {
        return Ok(unchanged());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(w.ncols(), |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();
    let mut u = DVector::zeros(w.nrows());
    for _ in 0..power_iters {
        let wv = w * &v;
        let n = wv.norm();
        if n == 0.0 {
            // Start vector in the null space; restart along a basis direction.
            v = DVector::from_fn(w.ncols(), |i, _| if i == 0 { 1.0 } else { 0.0 });
            continue;
        }
        u = wv / n;
        let wtu = w.transpose() * &u;
        v = &wtu / wtu.norm();
    }
    let sigma = u.dot(&(w * &v));
    Ok(SpectralNorm { matrix: w / sigma, sigma, zero_matrix: false })
}
