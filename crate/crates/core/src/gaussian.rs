//! The Gaussian scene representation.
//!
//! Parameters are stored unconstrained and activated on read: scales as
//! logarithms, opacities as logits, rotations as raw `(w, x, y, z)`
//! quaternions that are normalized before use.

use nalgebra::{Matrix3, SymmetricEigen};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::Vec3;
use crate::sh::{self, basis_count, MAX_SH_DEGREE};
use crate::spatial::KdTree;

/// Smallest initial scale, in meters.
pub const SCALE_FLOOR: f64 = 1e-7;
pub const INITIAL_OPACITY: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("need at least 4 points to initialize, got {0}")]
    InsufficientPoints(usize),
    #[error("unsupported SH degree {0}")]
    ShDegree(usize),
    #[error("inconsistent array lengths: {0}")]
    Inconsistent(String),
}

pub type Covariance3D = Matrix3<f64>;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quat_to_rotmat(q: &[f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls `dL/dR` back to the raw (unnormalized) quaternion.
pub fn rotmat_grad_to_quat(q: &[f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let gw = 2.0
        * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    // through q̂ = q / |q|
    let gh = [gw, gx, gy, gz];
    let qh = [w, x, y, z];
    let dot: f64 = (0..4).map(|i| gh[i] * qh[i]).sum();
    std::array::from_fn(|i| (gh[i] - dot * qh[i]) / n)
}

/// `Σ = R·S·Sᵀ·Rᵀ` with `S = diag(exp(log_scale))`.
pub fn covariance_3d(log_scale: &[f64; 3], rotation: &[f64; 4]) -> Covariance3D {
    let r = quat_to_rotmat(rotation);
    let s = Matrix3::from_diagonal(&Vec3::new(
        log_scale[0].exp(),
        log_scale[1].exp(),
        log_scale[2].exp(),
    ));
    let m = r * s;
    let sigma = m * m.transpose();
    // exact symmetry
    (sigma + sigma.transpose()) * 0.5
}

pub fn eigenvalues(cov: &Covariance3D) -> [f64; 3] {
    let mut e: Vec<f64> = SymmetricEigen::new(*cov).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    [e[0], e[1], e[2]]
}

/// Struct-of-arrays Gaussian parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    pub sh_degree: usize,
    pub centers: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    /// `(w, x, y, z)`.
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    /// `N × B × 3`, basis-major then channel.
    pub sh: Vec<f64>,
}

impl GaussianSet {
    pub fn empty(sh_degree: usize) -> Self {
        Self {
            sh_degree,
            centers: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn basis_count(&self) -> usize {
        basis_count(self.sh_degree)
    }

    /// Coefficients per Gaussian (`B × 3`).
    pub fn sh_stride(&self) -> usize {
        self.basis_count() * 3
    }

    pub fn validate(&self) -> Result<(), GaussianError> {
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(GaussianError::ShDegree(self.sh_degree));
        }
        let n = self.len();
        if self.log_scales.len() != n
            || self.rotations.len() != n
            || self.opacity_logits.len() != n
            || self.sh.len() != n * self.sh_stride()
        {
            return Err(GaussianError::Inconsistent(format!(
                "centers {n}, scales {}, rotations {}, opacities {}, sh {}",
                self.log_scales.len(),
                self.rotations.len(),
                self.opacity_logits.len(),
                self.sh.len()
            )));
        }
        Ok(())
    }

    pub fn center(&self, i: usize) -> Vec3 {
        Vec3::from(self.centers[i])
    }

    pub fn scale(&self, i: usize) -> Vec3 {
        Vec3::from(self.log_scales[i].map(f64::exp))
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn sh_coeffs(&self, i: usize) -> &[f64] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    pub fn covariance(&self, i: usize) -> Covariance3D {
        covariance_3d(&self.log_scales[i], &self.rotations[i])
    }

    /// Degree-0 color of Gaussian `i`.
    pub fn base_color(&self, i: usize) -> [f64; 3] {
        let c = self.sh_coeffs(i);
        [sh::dc_to_rgb(c[0]), sh::dc_to_rgb(c[1]), sh::dc_to_rgb(c[2])]
    }

    pub fn push(
        &mut self,
        center: [f64; 3],
        log_scale: [f64; 3],
        rotation: [f64; 4],
        opacity_logit: f64,
        sh: &[f64],
    ) {
        assert_eq!(sh.len(), self.sh_stride());
        self.centers.push(center);
        self.log_scales.push(log_scale);
        self.rotations.push(rotation);
        self.opacity_logits.push(opacity_logit);
        self.sh.extend_from_slice(sh);
    }

    /// Copy of row `i` appended to `out`.
    pub fn push_row_from(&self, i: usize, out: &mut GaussianSet) {
        out.push(
            self.centers[i],
            self.log_scales[i],
            self.rotations[i],
            self.opacity_logits[i],
            self.sh_coeffs(i),
        );
    }

    /// Rows listed in `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> GaussianSet {
        let mut out = GaussianSet::empty(self.sh_degree);
        for &i in indices {
            self.push_row_from(i, &mut out);
        }
        out
    }

    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n > 0.0 {
                for v in q.iter_mut() {
                    *v /= n;
                }
            } else {
                *q = [1.0, 0.0, 0.0, 0.0];
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.centers.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh.iter().all(|v| v.is_finite())
    }
}

/// Isotropic Gaussians centered on the cloud points, scaled by the mean
/// distance to each point's three nearest other points.
pub fn init_from_cloud(cloud: &PointCloud, sh_degree: usize) -> Result<GaussianSet, GaussianError> {
    if sh_degree > MAX_SH_DEGREE {
        return Err(GaussianError::ShDegree(sh_degree));
    }
    if cloud.len() < 4 {
        return Err(GaussianError::InsufficientPoints(cloud.len()));
    }
    let tree = KdTree::build(&cloud.positions);
    let mut set = GaussianSet::empty(sh_degree);
    let stride = set.sh_stride();
    let opacity_logit = logit(INITIAL_OPACITY);
    let mut coeffs = vec![0.0; stride];
    for (i, p) in cloud.positions.iter().enumerate() {
        let nn = tree.k_nearest_filtered(p, 3, |j| j != i);
        let mean = nn.iter().map(|n| n.distance()).sum::<f64>() / 3.0;
        let s = mean.max(SCALE_FLOOR).ln();
        coeffs.fill(0.0);
        if let Some(colors) = &cloud.colors {
            for c in 0..3 {
                coeffs[c] = sh::rgb_to_dc(colors[i][c]);
            }
        }
        set.push(
            [p.x, p.y, p.z],
            [s; 3],
            [1.0, 0.0, 0.0, 0.0],
            opacity_logit,
            &coeffs,
        );
    }
    Ok(set)
}

/// Gaussian centers with opacity at or above `prune_opacity`, colored by
/// their degree-0 term.
pub fn extract_centers(g: &GaussianSet, prune_opacity: f64) -> PointCloud {
    let keep: Vec<usize> = (0..g.len()).filter(|&i| g.opacity(i) >= prune_opacity).collect();
    PointCloud {
        positions: keep.iter().map(|&i| g.center(i)).collect(),
        colors: Some(keep.iter().map(|&i| g.base_color(i)).collect()),
    }
}
