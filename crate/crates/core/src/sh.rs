//! Real spherical harmonics up to degree 3 for view-dependent color.
//!
//! Basis ordering and signs follow the common Gaussian-splatting layout
//! (Condon–Shortley phase, `m = -l..=l` within each band).

use crate::geometry::Vec3;

pub const MAX_SH_DEGREE: usize = 3;
pub const MAX_SH_BASIS: usize = 16;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of basis functions for a degree.
pub const fn basis_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values and their partial derivatives w.r.t. the (unnormalized)
/// direction components. Entries beyond `basis_count(degree)` are zero.
pub fn basis_with_grad(dir: &Vec3, degree: usize) -> ([f64; MAX_SH_BASIS], [Vec3; MAX_SH_BASIS]) {
    let mut y = [0.0; MAX_SH_BASIS];
    let mut g = [Vec3::zeros(); MAX_SH_BASIS];
    let (x, yv, z) = (dir.x, dir.y, dir.z);
    y[0] = SH_C0;
    if degree >= 1 {
        y[1] = -SH_C1 * yv;
        y[2] = SH_C1 * z;
        y[3] = -SH_C1 * x;
        g[1] = Vec3::new(0.0, -SH_C1, 0.0);
        g[2] = Vec3::new(0.0, 0.0, SH_C1);
        g[3] = Vec3::new(-SH_C1, 0.0, 0.0);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, yv * yv, z * z);
        y[4] = SH_C2[0] * x * yv;
        y[5] = SH_C2[1] * yv * z;
        y[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        y[7] = SH_C2[3] * x * z;
        y[8] = SH_C2[4] * (xx - yy);
        g[4] = SH_C2[0] * Vec3::new(yv, x, 0.0);
        g[5] = SH_C2[1] * Vec3::new(0.0, z, yv);
        g[6] = SH_C2[2] * Vec3::new(-2.0 * x, -2.0 * yv, 4.0 * z);
        g[7] = SH_C2[3] * Vec3::new(z, 0.0, x);
        g[8] = SH_C2[4] * Vec3::new(2.0 * x, -2.0 * yv, 0.0);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, yv * yv, z * z);
        y[9] = SH_C3[0] * yv * (3.0 * xx - yy);
        y[10] = SH_C3[1] * x * yv * z;
        y[11] = SH_C3[2] * yv * (4.0 * zz - xx - yy);
        y[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        y[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
        y[14] = SH_C3[5] * z * (xx - yy);
        y[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        g[9] = SH_C3[0] * Vec3::new(6.0 * x * yv, 3.0 * xx - 3.0 * yy, 0.0);
        g[10] = SH_C3[1] * Vec3::new(yv * z, x * z, x * yv);
        g[11] = SH_C3[2] * Vec3::new(-2.0 * x * yv, 4.0 * zz - xx - 3.0 * yy, 8.0 * yv * z);
        g[12] = SH_C3[3] * Vec3::new(-6.0 * x * z, -6.0 * yv * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
        g[13] = SH_C3[4] * Vec3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * yv, 8.0 * x * z);
        g[14] = SH_C3[5] * Vec3::new(2.0 * x * z, -2.0 * yv * z, xx - yy);
        g[15] = SH_C3[6] * Vec3::new(3.0 * xx - 3.0 * yy, -6.0 * x * yv, 0.0);
    }
    (y, g)
}

pub fn basis(dir: &Vec3, degree: usize) -> [f64; MAX_SH_BASIS] {
    basis_with_grad(dir, degree).0
}

/// Unclamped `0.5 + Σ Y_b c_b` for coefficients laid out as `[b][channel]`.
pub fn eval_raw(coeffs: &[f64], dir: &Vec3, degree: usize) -> [f64; 3] {
    let y = basis(dir, degree);
    let mut rgb = [0.5; 3];
    for (b, yb) in y.iter().enumerate().take(basis_count(degree)) {
        for c in 0..3 {
            rgb[c] += yb * coeffs[b * 3 + c];
        }
    }
    rgb
}

/// View-dependent color clamped to [0, 1].
pub fn sh_to_color(coeffs: &[f64], view_dir: &Vec3, degree: usize) -> [f64; 3] {
    eval_raw(coeffs, view_dir, degree).map(|v| v.clamp(0.0, 1.0))
}

/// DC coefficient that reproduces `rgb` at degree 0.
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

pub fn dc_to_rgb(dc: f64) -> f64 {
    (0.5 + SH_C0 * dc).clamp(0.0, 1.0)
}
