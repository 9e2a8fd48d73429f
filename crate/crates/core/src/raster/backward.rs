use nalgebra::{Matrix2, Matrix3, Vector2};
use rayon::prelude::*;

use super::forward::{falloff_power, fingerprint, RenderAux};
use super::project::Splat2D;
use super::{Camera, RasterError, ALPHA_MAX};
use crate::gaussian::{quat_to_rotmat, rotmat_grad_to_quat, GaussianSet};
use crate::geometry::Vec3;
use crate::image::Image;
use crate::sh;

/// Gradients w.r.t. every parameter array of a [`GaussianSet`], with the
/// same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub centers: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub sh: Vec<f64>,
    /// Norm of the gradient w.r.t. the projected center in normalized
    /// device coordinates; the densification signal.
    pub screen_grad_norm: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize, sh_stride: usize) -> Self {
        Self {
            centers: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            sh: vec![0.0; n * sh_stride],
            screen_grad_norm: vec![0.0; n],
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

/// Upstream gradient for one splat in screen space.
#[derive(Debug, Clone, Copy, Default)]
struct ScreenGrad {
    mean: Vector2<f64>,
    /// Full-matrix gradient w.r.t. the conic.
    conic: Matrix2<f64>,
    color: [f64; 3],
    opacity: f64,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        self.mean += o.mean;
        self.conic += o.conic;
        for c in 0..3 {
            self.color[c] += o.color[c];
        }
        self.opacity += o.opacity;
    }
}

/// Backpropagates `dl_dimage` through the forward pass recorded in `aux`.
pub fn render_backward(
    g: &GaussianSet,
    cam: &Camera,
    background: [f64; 3],
    aux: &RenderAux,
    dl_dimage: &Image,
) -> Result<Gradients, RasterError> {
    let (width, height) = (cam.width(), cam.height());
    if aux.width != width || aux.height != height || aux.gaussian_count != g.len() {
        return Err(RasterError::StaleAux(format!(
            "aux is {}x{} with {} Gaussians, inputs are {}x{} with {}",
            aux.width,
            aux.height,
            aux.gaussian_count,
            width,
            height,
            g.len()
        )));
    }
    if aux.fingerprint != fingerprint(g, cam, &background) {
        return Err(RasterError::StaleAux(
            "parameters, camera or background changed since the forward pass".into(),
        ));
    }
    if dl_dimage.shape() != (width, height, 3) {
        return Err(RasterError::GradShape {
            got: dl_dimage.shape(),
            expected: (width, height, 3),
        });
    }

    let screen = screen_space_backward(aux, background, dl_dimage);

    let per_splat: Vec<SplatParamGrad> = aux
        .splats
        .par_iter()
        .zip(screen.par_iter())
        .map(|(s, sg)| splat_backward(g, cam, s, sg))
        .collect();

    let stride = g.sh_stride();
    let mut out = Gradients::zeros(g.len(), stride);
    let half_w = 0.5 * width as f64;
    let half_h = 0.5 * height as f64;
    for ((s, sg), pg) in aux.splats.iter().zip(&screen).zip(per_splat) {
        let i = s.index;
        out.centers[i] = pg.center;
        out.log_scales[i] = pg.log_scale;
        out.rotations[i] = pg.rotation;
        out.opacity_logits[i] = pg.opacity_logit;
        out.sh[i * stride..(i + 1) * stride].copy_from_slice(&pg.sh);
        out.screen_grad_norm[i] = Vector2::new(sg.mean.x * half_w, sg.mean.y * half_h).norm();
    }
    Ok(out)
}

/// Per-pixel reverse compositing, reduced per splat in fixed tile order.
fn screen_space_backward(aux: &RenderAux, background: [f64; 3], dl: &Image) -> Vec<ScreenGrad> {
    let width = aux.width;
    let tiles = super::forward::Tiles {
        tiles_x: width.div_ceil(super::TILE_SIZE),
        tiles_y: aux.height.div_ceil(super::TILE_SIZE),
        lists: Vec::new(),
    };
    let n_tiles = tiles.tiles_x * tiles.tiles_y;

    // Each tile accumulates densely over its own splat list, in pixel order.
    let partials: Vec<Vec<ScreenGrad>> = (0..n_tiles)
        .into_par_iter()
        .map(|t| {
            let list = &aux.tile_lists[t];
            let mut local = vec![ScreenGrad::default(); list.len()];
            for (x, y) in tiles.pixels(t, width, aux.height) {
                let p = y * width + x;
                let contribs = &aux.contributions[aux.pixel_offsets[p]..aux.pixel_offsets[p + 1]];
                if contribs.is_empty() {
                    continue;
                }
                let dl_dc = [dl.data[p * 3], dl.data[p * 3 + 1], dl.data[p * 3 + 2]];
                let t_final = aux.final_transmittance[p];
                // color composited behind the current splat, background included
                let mut behind = background.map(|b| b * t_final);
                for c in contribs.iter().rev() {
                    let s: &Splat2D = &aux.splats[c.splat as usize];
                    let w = c.alpha * c.transmittance;
                    let mut dl_dalpha = 0.0;
                    let mut g = ScreenGrad::default();
                    for ch in 0..3 {
                        g.color[ch] = dl_dc[ch] * w;
                        dl_dalpha +=
                            dl_dc[ch] * (s.color[ch] * c.transmittance - behind[ch] / (1.0 - c.alpha));
                        behind[ch] += s.color[ch] * w;
                    }
                    if s.opacity * c.falloff < ALPHA_MAX {
                        g.opacity = dl_dalpha * c.falloff;
                        let dl_dpower = dl_dalpha * c.alpha;
                        let (_, dx, dy) = falloff_power(s, x, y);
                        let d = Vector2::new(dx, dy);
                        g.mean = s.conic * d * dl_dpower;
                        g.conic = d * d.transpose() * (-0.5 * dl_dpower);
                    }
                    let slot = list
                        .binary_search(&c.splat)
                        .expect("contributor is binned in its tile");
                    local[slot].add(&g);
                }
            }
            local
        })
        .collect();

    let mut total = vec![ScreenGrad::default(); aux.splats.len()];
    for (list, tile) in aux.tile_lists.iter().zip(partials) {
        for (&k, g) in list.iter().zip(&tile) {
            total[k as usize].add(g);
        }
    }
    total
}

struct SplatParamGrad {
    center: [f64; 3],
    log_scale: [f64; 3],
    rotation: [f64; 4],
    opacity_logit: f64,
    sh: Vec<f64>,
}

fn splat_backward(g: &GaussianSet, cam: &Camera, s: &Splat2D, sg: &ScreenGrad) -> SplatParamGrad {
    let i = s.index;
    let k = &cam.intrinsics;
    let (fx, fy) = (k.fx, k.fy);
    let w2c = cam.world_to_cam_rotation();

    // color through SH and the clamp
    let degree = g.sh_degree;
    let n_basis = g.basis_count();
    let coeffs = g.sh_coeffs(i);
    let (basis, dbasis) = sh::basis_with_grad(&s.view_dir, degree);
    let dl_draw: [f64; 3] = std::array::from_fn(|c| if s.color_active[c] { sg.color[c] } else { 0.0 });
    let mut sh_grad = vec![0.0; n_basis * 3];
    let mut dl_ddir = Vec3::zeros();
    for b in 0..n_basis {
        for c in 0..3 {
            sh_grad[b * 3 + c] = dl_draw[c] * basis[b];
            if b > 0 {
                dl_ddir += dbasis[b] * (dl_draw[c] * coeffs[b * 3 + c]);
            }
        }
    }
    let mut dl_dcenter = Vec3::zeros();
    if degree > 0 && s.view_dist > 0.0 {
        let d = s.view_dir;
        dl_dcenter += (dl_ddir - d * d.dot(&dl_ddir)) / s.view_dist;
    }

    let op = s.opacity;
    let opacity_logit = sg.opacity * op * (1.0 - op);

    // conic -> dilated covariance
    let dl_dcov2 = if s.det_floored {
        Matrix2::zeros()
    } else {
        -(s.conic * sg.conic * s.conic)
    };
    let dl_dcov2 = (dl_dcov2 + dl_dcov2.transpose()) * 0.5;
    // cov2 = M Σ Mᵀ with M = J·W
    let m = s.jw;
    let dl_dsigma: Matrix3<f64> = m.transpose() * dl_dcov2 * m;
    let dl_dm = dl_dcov2 * m * s.cov3d * 2.0;
    let dl_dj = dl_dm * w2c.transpose();

    let t = s.p_cam;
    let inv_z = 1.0 / t.z;
    let inv_z2 = inv_z * inv_z;
    let inv_z3 = inv_z2 * inv_z;
    let mut dl_dt = Vec3::new(
        dl_dj[(0, 2)] * (-fx * inv_z2),
        dl_dj[(1, 2)] * (-fy * inv_z2),
        dl_dj[(0, 0)] * (-fx * inv_z2)
            + dl_dj[(0, 2)] * (2.0 * fx * t.x * inv_z3)
            + dl_dj[(1, 1)] * (-fy * inv_z2)
            + dl_dj[(1, 2)] * (2.0 * fy * t.y * inv_z3),
    );
    // projected mean
    let (gu, gv) = (sg.mean.x, sg.mean.y);
    dl_dt += Vec3::new(
        gu * fx * inv_z,
        gv * fy * inv_z,
        -gu * fx * t.x * inv_z2 - gv * fy * t.y * inv_z2,
    );
    dl_dcenter += w2c.transpose() * dl_dt;

    // Σ = (R S)(R S)ᵀ
    let rot = quat_to_rotmat(&g.rotations[i]);
    let scale = g.scale(i);
    let rs = rot * Matrix3::from_diagonal(&scale);
    let sym = (dl_dsigma + dl_dsigma.transpose()) * 0.5;
    let dl_drs = sym * rs * 2.0;
    let mut log_scale = [0.0; 3];
    let mut dl_drot = Matrix3::zeros();
    for col in 0..3 {
        let mut ds = 0.0;
        for row in 0..3 {
            ds += dl_drs[(row, col)] * rot[(row, col)];
            dl_drot[(row, col)] = dl_drs[(row, col)] * scale[col];
        }
        log_scale[col] = ds * scale[col];
    }
    let rotation = rotmat_grad_to_quat(&g.rotations[i], &dl_drot);

    SplatParamGrad {
        center: [dl_dcenter.x, dl_dcenter.y, dl_dcenter.z],
        log_scale,
        rotation,
        opacity_logit,
        sh: sh_grad,
    }
}
