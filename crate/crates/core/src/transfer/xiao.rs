use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};

use super::{check_inputs, foreground_cloud, write_foreground, TransferError, Transferred};
use crate::imgcore::{moments_of, ChannelStats, Image, Mask};

/// Floor on covariance eigenvalues, so flat targets do not divide by zero.
pub const XIAO_EIGEN_FLOOR: f64 = 1e-12;

/// Translation, rotation and scaling that take one image's foreground to its
/// principal-axis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrices {
    pub translation: Matrix4<f64>,
    /// Columns are principal axes, sorted by decreasing variance.
    pub rotation: Matrix3<f64>,
    /// Diagonal of per-axis standard deviations.
    pub scaling: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrices {
    pub target: FrameMatrices,
    pub reference: FrameMatrices,
}

impl TransferMatrices {
    /// Homogeneous composition `T_r R_r S_r S_t⁻¹ R_tᵀ T_t⁻¹`.
    pub fn affine(&self) -> Matrix4<f64> {
        let t = &self.target;
        let r = &self.reference;
        let s_t_inv = Matrix3::from_diagonal(&t.scaling.diagonal().map(|s| 1.0 / s));
        let linear = r.rotation * r.scaling * s_t_inv * t.rotation.transpose();
        let t_inv = t.translation.try_inverse().expect("translations are invertible");
        r.translation * homogeneous(&linear) * t_inv
    }
}

fn homogeneous(m: &Matrix3<f64>) -> Matrix4<f64> {
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(m);
    h
}

fn frame(stats: &ChannelStats) -> FrameMatrices {
    let cov = Matrix3::from_fn(|r, c| stats.covariance[r][c]);
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut rotation = Matrix3::zeros();
    let mut scales = Vector3::zeros();
    for (k, &i) in order.iter().enumerate() {
        let mut v: Vector3<f64> = eig.eigenvectors.column(i).into();
        let (_, big) = v.iter().enumerate().fold((0.0, 0.0), |acc, (_, &x)| if x.abs() > acc.0 { (x.abs(), x) } else { acc });
        if big < 0.0 {
            v = -v;
        }
        rotation.set_column(k, &v);
        scales[k] = eig.eigenvalues[i].max(XIAO_EIGEN_FLOOR).sqrt();
    }
    let mut translation = Matrix4::identity();
    translation.fixed_view_mut::<3, 1>(0, 3).copy_from(&Vector3::from(stats.mean));
    FrameMatrices { translation, rotation, scaling: Matrix3::from_diagonal(&scales) }
}

/// Principal-axis frames for a target/reference pair of foreground statistics.
pub fn xiao_matrices(target: &ChannelStats, reference: &ChannelStats) -> TransferMatrices {
    TransferMatrices { target: frame(target), reference: frame(reference) }
}

/// Mean and covariance matching in RGB along each image's principal axes.
pub fn transfer_xiao(
    target: &Image,
    t_mask: &Mask,
    reference: &Image,
    r_mask: &Mask,
) -> Result<Transferred, TransferError> {
    check_inputs(target, t_mask, reference, r_mask)?;
    let t_cloud = foreground_cloud(target, t_mask);
    let r_cloud = foreground_cloud(reference, r_mask);
    let m = xiao_matrices(&moments_of(&t_cloud), &moments_of(&r_cloud)).affine();
    let mapped: Vec<[f64; 3]> = t_cloud
        .iter()
        .map(|p| {
            let o = m * Vector4::new(p[0], p[1], p[2], 1.0);
            [o[0], o[1], o[2]]
        })
        .collect();
    Ok(write_foreground(target, t_mask, &mapped))
}
