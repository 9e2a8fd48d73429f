use nalgebra::{Matrix2, Matrix2x3, Matrix3};

use super::{Camera, COV2D_DILATION, DET_FLOOR, NEAR_PLANE};
use crate::gaussian::GaussianSet;
use crate::geometry::{Pixel, Vec3};
use crate::sh;

/// A Gaussian after projection into one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Index of the source Gaussian.
    pub index: usize,
    pub mean2d: Pixel,
    /// Dilated screen-space covariance (px²).
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    /// 3σ bound of the footprint along its major axis (px).
    pub radius: f64,
    pub(crate) p_cam: Vec3,
    pub(crate) view_dir: Vec3,
    pub(crate) view_dist: f64,
    /// False where the color channel was clamped to [0, 1].
    pub(crate) color_active: [bool; 3],
    pub(crate) cov3d: Matrix3<f64>,
    /// `J·W`, the linearized world-to-pixel map at the center.
    pub(crate) jw: Matrix2x3<f64>,
    pub(crate) det_floored: bool,
}

/// Projects Gaussian `i`; `None` when it is behind the near plane or its
/// footprint misses every pixel center.
pub fn project_gaussian(g: &GaussianSet, i: usize, cam: &Camera) -> Option<Splat2D> {
    let k = &cam.intrinsics;
    let center = g.center(i);
    let t = cam.to_camera(&center);
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let (fx, fy) = (k.fx, k.fy);
    let inv_z = 1.0 / t.z;
    let j = Matrix2x3::new(
        fx * inv_z,
        0.0,
        -fx * t.x * inv_z * inv_z,
        0.0,
        fy * inv_z,
        -fy * t.y * inv_z * inv_z,
    );
    let jw = j * cam.world_to_cam_rotation();
    let cov3d = g.covariance(i);
    let mut cov2d = jw * cov3d * jw.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += COV2D_DILATION;
    cov2d[(1, 1)] += COV2D_DILATION;

    let (a, b, c) = (cov2d[(0, 0)], cov2d[(0, 1)], cov2d[(1, 1)]);
    let raw_det = a * c - b * b;
    let det_floored = raw_det < DET_FLOOR;
    let det = raw_det.max(DET_FLOOR);
    let conic = Matrix2::new(c / det, -b / det, -b / det, a / det);

    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - raw_det).max(0.0).sqrt();
    let radius = 3.0 * lambda_max.sqrt();

    let mean2d = Pixel {
        u: fx * t.x * inv_z + k.cx,
        v: fy * t.y * inv_z + k.cy,
    };
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    if mean2d.u + radius < 0.0
        || mean2d.u - radius > w - 1.0
        || mean2d.v + radius < 0.0
        || mean2d.v - radius > h - 1.0
    {
        return None;
    }

    let offset = center - cam.center();
    let view_dist = offset.norm();
    let view_dir = if view_dist > 0.0 {
        offset / view_dist
    } else {
        Vec3::z()
    };
    let raw = sh::eval_raw(g.sh_coeffs(i), &view_dir, g.sh_degree);
    let color_active = raw.map(|v| (0.0..=1.0).contains(&v));
    let color = raw.map(|v| v.clamp(0.0, 1.0));

    Some(Splat2D {
        index: i,
        mean2d,
        cov2d,
        conic,
        depth: t.z,
        color,
        opacity: g.opacity(i),
        radius,
        p_cam: t,
        view_dir,
        view_dist,
        color_active,
        cov3d,
        jw,
        det_floored,
    })
}
