use super::{check_inputs, convert_cloud, foreground_cloud, write_foreground, TransferError, TransferMethod, Transferred};
use crate::imgcore::{ColorSpace, Image, Mask};

/// Level lookup table produced by cumulative histogram matching.
///
/// Values are quantized to `bins` levels over `[0, 1]`. Each target level is
/// assigned the occupied reference level whose cumulative frequency is nearest
/// (ties go to the lower level) and is mapped to the mean of the reference
/// samples on that level.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramLut {
    bins: usize,
    assignment: Vec<usize>,
    values: Vec<f64>,
}

impl HistogramLut {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn level(&self, v: f64) -> usize {
        level(v, self.bins)
    }

    /// Reference level assigned to target level `level`.
    pub fn assignment(&self, level: usize) -> usize {
        self.assignment[level]
    }

    pub fn map(&self, v: f64) -> f64 {
        self.values[self.level(v)]
    }
}

fn level(v: f64, bins: usize) -> usize {
    (v.clamp(0.0, 1.0) * (bins - 1) as f64).round() as usize
}

fn cumulative(counts: &[u64]) -> Vec<u64> {
    counts
        .iter()
        .scan(0u64, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect()
}

/// Build the nearest-neighbour cumulative-histogram mapping from `target` samples to `reference` samples.
pub fn match_histogram_1d(target: &[f64], reference: &[f64], bins: usize) -> Result<HistogramLut, TransferError> {
    TransferMethod::FeckerHist { bins }.validate()?;
    if target.is_empty() || reference.is_empty() {
        return Err(crate::imgcore::ImageError::EmptyMask.into());
    }
    let mut t_hist = vec![0u64; bins];
    let mut r_hist = vec![0u64; bins];
    let mut r_sum = vec![0.0; bins];
    for &v in target {
        t_hist[level(v, bins)] += 1;
    }
    for &v in reference {
        let l = level(v, bins);
        r_hist[l] += 1;
        r_sum[l] += v;
    }
    let t_cdf = cumulative(&t_hist);
    let r_cdf = cumulative(&r_hist);
    let n_t = target.len() as u128;
    let n_r = reference.len() as u128;

    // Occupied reference levels and their cumulative counts, ascending.
    let occupied: Vec<usize> = (0..bins).filter(|&j| r_hist[j] > 0).collect();
    // |C_r(j) - C_t(i)| scaled by n_t * n_r, so comparisons are exact.
    let gap = |j: usize, ct: u64| (r_cdf[j] as u128 * n_t).abs_diff(ct as u128 * n_r);

    let mut assignment = vec![0usize; bins];
    let mut cursor = 0usize;
    for (i, &ct) in t_cdf.iter().enumerate() {
        // t_cdf is non-decreasing, so the best index never moves left.
        while cursor + 1 < occupied.len() && gap(occupied[cursor + 1], ct) < gap(occupied[cursor], ct) {
            cursor += 1;
        }
        assignment[i] = occupied[cursor];
    }
    let values = assignment.iter().map(|&j| r_sum[j] / r_hist[j] as f64).collect();
    Ok(HistogramLut { bins, assignment, values })
}

fn match_cloud(t: &[[f64; 3]], r: &[[f64; 3]], bins: usize) -> Result<Vec<[f64; 3]>, TransferError> {
    let luts = (0..3)
        .map(|c| {
            let tv: Vec<f64> = t.iter().map(|p| p[c]).collect();
            let rv: Vec<f64> = r.iter().map(|p| p[c]).collect();
            match_histogram_1d(&tv, &rv, bins)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(t.iter().map(|p| std::array::from_fn(|c| luts[c].map(p[c]))).collect())
}

/// Per-channel cumulative histogram matching in the images' own (RGB) space.
pub fn histogram_match_channels(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
    bins: usize,
) -> Result<Transferred, TransferError> {
    check_inputs(target, t_mask, reference, r_mask)?;
    let mapped = match_cloud(&foreground_cloud(target, t_mask), &foreground_cloud(reference, r_mask), bins)?;
    Ok(write_foreground(target, t_mask, &mapped))
}

/// Cumulative histogram matching per channel in full-range YCbCr.
pub fn transfer_fecker(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
    bins: usize,
) -> Result<Transferred, TransferError> {
    check_inputs(target, t_mask, reference, r_mask)?;
    let t = convert_cloud(&foreground_cloud(target, t_mask), ColorSpace::Rgb, ColorSpace::YCbCr)?;
    let r = convert_cloud(&foreground_cloud(reference, r_mask), ColorSpace::Rgb, ColorSpace::YCbCr)?;
    let mapped = match_cloud(&t, &r, bins)?;
    let rgb = convert_cloud(&mapped, ColorSpace::YCbCr, ColorSpace::Rgb)?;
    Ok(write_foreground(target, t_mask, &rgb))
}
