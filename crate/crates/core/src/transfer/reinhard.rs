use super::{check_inputs, convert_cloud, foreground_cloud, write_foreground, TransferError, Transferred};
use crate::imgcore::{moments_of, ColorSpace, Image, Mask};

/// Channels with a standard deviation below this are treated as constant.
const FLAT_STD: f64 = 1e-6;

/// Per-channel mean/std matching in Lab: `o = (σ_r / σ_t)(x - μ_t) + μ_r`.
///
/// A constant target channel is mapped to the reference mean.
pub fn transfer_reinhard(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
) -> Result<Transferred, TransferError> {
    check_inputs(target, t_mask, reference, r_mask)?;
    let t_lab = convert_cloud(&foreground_cloud(target, t_mask), ColorSpace::Rgb, ColorSpace::Lab)?;
    let r_lab = convert_cloud(&foreground_cloud(reference, r_mask), ColorSpace::Rgb, ColorSpace::Lab)?;
    let ts = moments_of(&t_lab);
    let rs = moments_of(&r_lab);

    let mapped: Vec<[f64; 3]> = t_lab
        .iter()
        .map(|p| {
            std::array::from_fn(|c| {
                if ts.std[c] < FLAT_STD {
                    rs.mean[c]
                } else {
                    rs.std[c] / ts.std[c] * (p[c] - ts.mean[c]) + rs.mean[c]
                }
            })
        })
        .collect();
    let rgb = convert_cloud(&mapped, ColorSpace::Lab, ColorSpace::Rgb)?;
    Ok(write_foreground(target, t_mask, &rgb))
}
