use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::{write_dataset, DepthEncoding, DEFAULT_DEPTH_SCALE};
use super::ply::write_gaussians;
use super::IoError;
use crate::depth::DepthFrame;
use crate::gaussian::{logit, GaussianSet};
use crate::geometry::{CameraIntrinsics, Pose, Vec3};
use crate::image::Image;
use crate::raster::{render, Camera};
use crate::sh::rgb_to_dc;

/// Pixels whose accumulated opacity is below this get no depth.
pub const DEPTH_ALPHA_MIN: f64 = 0.5;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.ply";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub gaussians: usize,
    pub views: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Distance of every camera from the origin.
    pub camera_radius: f64,
    pub focal: f64,
    /// Minimum distance between Gaussian centers.
    pub min_separation: f64,
    pub background: [f64; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            gaussians: 10,
            views: 20,
            width: 64,
            height: 64,
            seed: 0,
            camera_radius: 2.0,
            focal: 70.0,
            min_separation: 0.25,
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub truth: GaussianSet,
    pub cameras: Vec<Camera>,
    /// Renders of `truth`, quantized to 8 bits.
    pub images: Vec<Image>,
    pub depths: Vec<DepthFrame>,
}

fn f32r(v: f64) -> f64 {
    v as f32 as f64
}

/// Rounds the pose through its stored form until it is a fixed point, so a
/// reloaded manifest reproduces it bit for bit.
fn canonical(pose: Pose) -> Pose {
    let mut p = pose;
    for _ in 0..8 {
        let t = p.translation;
        let q = Pose::from_wxyz(p.wxyz(), [t.x, t.y, t.z]).expect("unit quaternion");
        if q == p {
            break;
        }
        p = q;
    }
    p
}

/// Camera `k` of `n` on the upper hemisphere (z up), aimed at the origin.
fn hemisphere_pose(k: usize, n: usize, radius: f64) -> Pose {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let elevation = (20.0 + 50.0 * (k as f64 + 0.5) / n as f64).to_radians();
    let azimuth = golden * k as f64;
    let eye = radius
        * Vec3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        );
    canonical(Pose::look_at(eye, Vec3::zeros(), Vec3::z()).expect("non-degenerate"))
}

fn random_truth(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> GaussianSet {
    let mut g = GaussianSet::empty(0);
    let mut centers: Vec<Vec3> = Vec::new();
    let mut sep = spec.min_separation;
    while centers.len() < spec.gaussians {
        let mut placed = false;
        for _ in 0..10_000 {
            let c = Vec3::new(
                f32r(rng.random_range(-0.4..0.4)),
                f32r(rng.random_range(-0.4..0.4)),
                f32r(rng.random_range(-0.4..0.4)),
            );
            if centers.iter().all(|o| (o - c).norm() >= sep) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            sep *= 0.8;
        }
    }
    for c in centers {
        let log_scale: [f64; 3] = std::array::from_fn(|_| f32r(rng.random_range(0.04f64..0.09).ln()));
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let q = q.map(|v| f32r(v / n));
        let opacity = f32r(logit(rng.random_range(0.7..0.95)));
        let dc: [f64; 3] = std::array::from_fn(|_| f32r(rgb_to_dc(rng.random_range(0.15..0.95))));
        g.push([c.x, c.y, c.z], log_scale, q, opacity, &dc);
    }
    g
}

/// Camera depth of the strongest contributor per pixel, 0 where the
/// accumulated opacity is below [`DEPTH_ALPHA_MIN`].
pub fn render_depth(g: &GaussianSet, cam: &Camera, background: [f64; 3]) -> Vec<f64> {
    let out = render(g, cam, background);
    let (w, h) = (cam.width(), cam.height());
    let mut depth = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if out.alpha[y * w + x] < DEPTH_ALPHA_MIN {
                continue;
            }
            let mut best: Option<(f64, f64)> = None;
            for c in out.aux.pixel_contributions(x, y) {
                let wgt = c.weight();
                if best.is_none_or(|b| wgt > b.0) {
                    best = Some((wgt, out.aux.splats[c.splat as usize].depth));
                }
            }
            depth[y * w + x] = best.map_or(0.0, |b| b.1);
        }
    }
    depth
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticScene, IoError> {
    if spec.views < 4 {
        return Err(IoError::Invalid(format!(
            "need at least 4 views, got {}",
            spec.views
        )));
    }
    if spec.gaussians == 0 {
        return Err(IoError::Invalid("need at least one Gaussian".into()));
    }
    let k = CameraIntrinsics::new(
        spec.focal,
        spec.focal,
        (spec.width as f64 - 1.0) / 2.0,
        (spec.height as f64 - 1.0) / 2.0,
        spec.width,
        spec.height,
    )
    .map_err(|e| IoError::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = random_truth(spec, &mut rng);
    let cameras: Vec<Camera> = (0..spec.views)
        .map(|i| Camera::new(k, hemisphere_pose(i, spec.views, spec.camera_radius)))
        .collect();
    let images = cameras
        .iter()
        .map(|c| render(&truth, c, spec.background).image.quantized_u8())
        .collect();
    let depths = cameras
        .iter()
        .map(|c| {
            let d = render_depth(&truth, c, spec.background);
            // keep exactly what the millimeter PNG stores
            let d = d
                .iter()
                .map(|v| (v / DEFAULT_DEPTH_SCALE).round() * DEFAULT_DEPTH_SCALE)
                .collect();
            DepthFrame::new(d, k, c.pose).map_err(|e| IoError::Invalid(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok(SyntheticScene {
        truth,
        cameras,
        images,
        depths,
    })
}

/// Writes the dataset and `ground_truth.ply`; returns the manifest path.
pub fn write_synthetic(scene: &SyntheticScene, dir: &Path) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let rgb: Vec<(Image, Camera)> = scene
        .images
        .iter()
        .cloned()
        .zip(scene.cameras.iter().copied())
        .collect();
    let manifest = write_dataset(
        dir,
        &rgb,
        &scene.depths,
        DepthEncoding::Png16,
        DEFAULT_DEPTH_SCALE,
    )?;
    write_gaussians(&dir.join(GROUND_TRUTH_FILE), &scene.truth)?;
    Ok(manifest)
}
