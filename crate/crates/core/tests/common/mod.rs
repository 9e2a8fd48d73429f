//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use holosplat::gaussian::{logit, GaussianSet};
use holosplat::geometry::{CameraIntrinsics, Pose, Vec3};
use holosplat::image::Image;
use holosplat::raster::{render, render_backward, Camera};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradScene {
    pub gaussians: GaussianSet,
    pub camera: Camera,
    pub background: [f64; 3],
    pub weights: Image,
}

/// Random small scene: up to 20 Gaussians in front of a 16×16 camera.
pub fn random_grad_scene(seed: u64) -> GradScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degree = (seed % 4) as usize;
    let n = rng.random_range(1..=20);
    let eye = Vec3::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-2.5..-1.5),
    );
    let pose = Pose::look_at(eye, Vec3::zeros(), Vec3::new(0.0, -1.0, 0.0)).unwrap();
    let k = CameraIntrinsics::new(24.0, 22.0, 7.3, 8.1, 16, 16).unwrap();
    let camera = Camera::new(k, pose);
    let mut g = GaussianSet::empty(degree);
    let stride = g.sh_stride();
    for _ in 0..n {
        let c = [
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
        ];
        let s = [
            rng.random_range(-2.6f64..-1.4),
            rng.random_range(-2.6f64..-1.4),
            rng.random_range(-2.6f64..-1.4),
        ];
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let o = logit(rng.random_range(0.2..0.9));
        let sh: Vec<f64> = (0..stride)
            .map(|i| {
                if i < 3 {
                    rng.random_range(-1.2..1.2)
                } else {
                    rng.random_range(-0.3..0.3)
                }
            })
            .collect();
        g.push(c, s, q, o, &sh);
    }
    let background = [rng.random(), rng.random(), rng.random()];
    let weights = Image::from_vec(
        16,
        16,
        3,
        (0..768).map(|_| rng.random_range(-1.0..1.0) / 768.0).collect(),
    )
    .unwrap();
    GradScene {
        gaussians: g,
        camera,
        background,
        weights,
    }
}

pub fn weighted_loss(s: &GradScene, g: &GaussianSet) -> f64 {
    let img = render(g, &s.camera, s.background).image;
    img.data.iter().zip(&s.weights.data).map(|(a, b)| a * b).sum()
}

pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

pub const FD_STEP: f64 = 1e-5;
pub const ABS_FLOOR: f64 = 1e-8;

/// Compares every analytic parameter gradient with central differences.
pub fn check_scene(seed: u64) -> GradCheck {
    let s = random_grad_scene(seed);
    let g = &s.gaussians;
    let out = render(g, &s.camera, s.background);
    let grads = render_backward(g, &s.camera, s.background, &out.aux, &s.weights).unwrap();

    let mut result = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let mut visit = |name: String, analytic: f64, perturb: &dyn Fn(&mut GaussianSet, f64)| {
        let mut gp = g.clone();
        perturb(&mut gp, FD_STEP);
        let mut gm = g.clone();
        perturb(&mut gm, -FD_STEP);
        let fd = (weighted_loss(&s, &gp) - weighted_loss(&s, &gm)) / (2.0 * FD_STEP);
        let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(ABS_FLOOR);
        result.checked += 1;
        if err > result.max_rel_err {
            result.max_rel_err = err;
            result.worst = format!("{name}: analytic {analytic:e} fd {fd:e}");
        }
    };
    for i in 0..g.len() {
        for k in 0..3 {
            visit(format!("center[{i}][{k}]"), grads.centers[i][k], &|x, h| {
                x.centers[i][k] += h
            });
            visit(format!("log_scale[{i}][{k}]"), grads.log_scales[i][k], &|x, h| {
                x.log_scales[i][k] += h
            });
        }
        for k in 0..4 {
            visit(format!("rotation[{i}][{k}]"), grads.rotations[i][k], &|x, h| {
                x.rotations[i][k] += h
            });
        }
        visit(format!("opacity[{i}]"), grads.opacity_logits[i], &|x, h| {
            x.opacity_logits[i] += h
        });
        let stride = g.sh_stride();
        for k in 0..stride {
            let j = i * stride + k;
            visit(format!("sh[{i}][{k}]"), grads.sh[j], &|x, h| x.sh[j] += h);
        }
    }
    result
}
