use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{GaussianAdam, GroupRates};
use super::densify::{densify_and_prune, reset_opacity, DensifyParams, DensifyStats};
use super::loss::photometric_loss_with_grad;
use super::{TrainConfig, TrainError};
use crate::eval::{psnr, SSIM_WINDOW};
use crate::gaussian::GaussianSet;
use crate::geometry::Vec3;
use crate::image::Image;
use crate::raster::{render, render_backward, Camera};

/// SH rest coefficients train this much slower than the DC term.
pub const SH_REST_LR_DIVISOR: f64 = 20.0;

/// A posed training image.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainView {
    pub camera: Camera,
    pub image: Image,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    /// PSNR of the view rendered at this iteration.
    pub psnr: f64,
    pub count: usize,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "iteration,loss,l1,dssim,psnr,count,seconds";

impl MetricsRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{},{:?}",
            self.iteration, self.loss, self.l1, self.dssim, self.psnr, self.count, self.seconds
        )
    }

    pub fn parse_csv_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return None;
        }
        Some(Self {
            iteration: f[0].parse().ok()?,
            loss: f[1].parse().ok()?,
            l1: f[2].parse().ok()?,
            dssim: f[3].parse().ok()?,
            psnr: f[4].parse().ok()?,
            count: f[5].parse().ok()?,
            seconds: f[6].parse().ok()?,
        })
    }
}

/// Per-iteration training metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricsRecord) {
        if let Some(last) = self.records.last() {
            assert!(r.iteration > last.iteration, "iterations must increase");
        }
        self.records.push(r);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", r.csv_line());
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, TrainError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(METRICS_HEADER) {
            return Err(TrainError::Data("metrics CSV header missing".into()));
        }
        let mut log = MetricsLog::default();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r = MetricsRecord::parse_csv_line(line)
                .ok_or_else(|| TrainError::Data(format!("metrics CSV line {}: {line:?}", n + 2)))?;
            log.push(r);
        }
        Ok(log)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// Hooks invoked by the training loop.
pub trait TrainObserver {
    fn on_record(&mut self, _record: &MetricsRecord) -> Result<(), String> {
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        _iteration: usize,
        _g: &GaussianSet,
        _adam: &GaussianAdam,
    ) -> Result<(), String> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub gaussians: GaussianSet,
    pub log: MetricsLog,
    pub optimizer: GaussianAdam,
}

/// Largest distance of a camera center from the centroid of all centers,
/// or 1 when every camera sits at the same spot.
pub fn scene_extent(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let c = cameras.iter().fold(Vec3::zeros(), |a, k| a + k.center()) / cameras.len() as f64;
    let r = cameras
        .iter()
        .map(|k| (k.center() - c).norm())
        .fold(0.0, f64::max);
    if r > 1e-9 {
        r
    } else {
        1.0
    }
}

/// Indices of training views after applying the holdout rule.
pub fn train_indices(n: usize, holdout_every_k: usize) -> Vec<usize> {
    (0..n)
        .filter(|i| holdout_every_k == 0 || i % holdout_every_k != 0)
        .collect()
}

/// PSNR of each view rendered from `g`.
pub fn view_psnrs(g: &GaussianSet, views: &[TrainView], background: [f64; 3]) -> Vec<f64> {
    views
        .iter()
        .map(|v| {
            let img = render(g, &v.camera, background).image;
            psnr(&img, &v.image, 1.0).unwrap_or(f64::NAN)
        })
        .collect()
}

fn check_inputs(views: &[TrainView], init: &GaussianSet, cfg: &TrainConfig) -> Result<(), TrainError> {
    cfg.validate()?;
    init.validate().map_err(|e| TrainError::Data(e.to_string()))?;
    if init.is_empty() {
        return Err(TrainError::Data("initial Gaussian set is empty".into()));
    }
    if views.is_empty() {
        return Err(TrainError::Data("no training views".into()));
    }
    for (i, v) in views.iter().enumerate() {
        let (w, h, c) = v.image.shape();
        if (w, h) != (v.camera.width(), v.camera.height()) || c != 3 {
            return Err(TrainError::Data(format!(
                "view {i}: image {w}x{h}x{c} does not match camera {}x{}x3",
                v.camera.width(),
                v.camera.height()
            )));
        }
        if w < SSIM_WINDOW || h < SSIM_WINDOW {
            return Err(TrainError::Data(format!(
                "view {i}: image smaller than the SSIM window"
            )));
        }
    }
    Ok(())
}

/// Optimizes `init` against `views`.
pub fn train(
    views: &[TrainView],
    init: &GaussianSet,
    cfg: &TrainConfig,
) -> Result<(GaussianSet, MetricsLog), TrainError> {
    train_with_observer(views, init, cfg, &mut ()).map(|o| (o.gaussians, o.log))
}

pub fn train_with_observer(
    views: &[TrainView],
    init: &GaussianSet,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    check_inputs(views, init, cfg)?;
    let order_pool = train_indices(views.len(), cfg.holdout_every_k);
    if order_pool.is_empty() {
        return Err(TrainError::Data("holdout leaves no training views".into()));
    }
    let cameras: Vec<Camera> = views.iter().map(|v| v.camera).collect();
    let extent = scene_extent(&cameras);
    let mut g = init.clone();
    g.normalize_rotations();
    let mut adam = GaussianAdam::new(&g);
    let mut stats = DensifyStats::new(g.len());
    let mut log = MetricsLog::default();
    let mut view_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = Vec::new();
    let start = Instant::now();
    let mut reset_seen = false;

    for it in 1..=cfg.iterations {
        let rates = GroupRates {
            position: cfg.position_lr(it) * extent,
            sh_dc: cfg.lr_sh,
            sh_rest: cfg.lr_sh / SH_REST_LR_DIVISOR,
            opacity: cfg.lr_opacity,
            scale: cfg.lr_scale,
            rotation: cfg.lr_rotation,
        };
        if cfg.is_reset_iteration(it) {
            reset_opacity(&mut g, cfg.opacity_reset_value);
            adam.opacity.zero_moments();
            reset_seen = true;
            log::debug!("iteration {it}: opacity reset");
        }
        if order.is_empty() {
            order = order_pool.clone();
            order.shuffle(&mut view_rng);
            order.reverse();
        }
        let view = &views[order.pop().expect("refilled above")];

        let out = render(&g, &view.camera, cfg.background);
        let (terms, dl_dimg) = photometric_loss_with_grad(&out.image, &view.image, cfg.lambda_dssim)?;
        if !terms.total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iteration: it,
                last_good: Box::new(g),
            });
        }
        let grads = render_backward(&g, &view.camera, cfg.background, &out.aux, &dl_dimg)?;
        if !grads.all_finite() {
            return Err(TrainError::NonFiniteGradient {
                iteration: it,
                detail: "render backward".into(),
                last_good: Box::new(g),
            });
        }
        stats.record(&out.aux.visible(), &out.aux.radii(), &grads.screen_grad_norm);
        let before = g.clone();
        if let Err(e) = adam.step(&mut g, &grads, &rates) {
            return Err(TrainError::NonFiniteGradient {
                iteration: it,
                detail: e.to_string(),
                last_good: Box::new(before),
            });
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient {
                iteration: it,
                detail: "parameters left the finite range after the update".into(),
                last_good: Box::new(before),
            });
        }

        if cfg.is_densify_iteration(it) {
            let params = DensifyParams {
                grad_threshold: cfg.densify_grad_threshold,
                prune_opacity: cfg.prune_opacity,
                extent,
                prune_large: reset_seen,
            };
            let d = densify_and_prune(&g, &stats, &params, &mut split_rng);
            log::debug!(
                "iteration {it}: cloned {}, split {}, pruned {}, now {}",
                d.cloned,
                d.split,
                d.pruned,
                d.gaussians.len()
            );
            adam.remap(&d.state_rows());
            g = d.gaussians;
            stats = DensifyStats::new(g.len());
        }

        let record = MetricsRecord {
            iteration: it,
            loss: terms.total,
            l1: terms.l1,
            dssim: terms.dssim,
            psnr: psnr(&out.image, &view.image, 1.0)?,
            count: g.len(),
            seconds: if cfg.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        observer.on_record(&record).map_err(TrainError::Observer)?;
        log.push(record);
        if it % cfg.checkpoint_interval == 0 && it != cfg.iterations {
            observer
                .on_checkpoint(it, &g, &adam)
                .map_err(TrainError::Observer)?;
        }
    }
    Ok(TrainOutcome {
        gaussians: g,
        log,
        optimizer: adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::logit;
    use crate::geometry::{CameraIntrinsics, Pose};

    fn scene() -> (Vec<TrainView>, GaussianSet) {
        let mut truth = GaussianSet::empty(0);
        truth.push(
            [0.0, 0.0, 0.0],
            [-1.8; 3],
            [1.0, 0.0, 0.0, 0.0],
            logit(0.9),
            &[1.0, -0.5, 0.2],
        );
        truth.push(
            [0.3, 0.1, 0.1],
            [-2.2; 3],
            [1.0, 0.0, 0.0, 0.0],
            logit(0.8),
            &[-0.6, 0.9, 0.4],
        );
        let k = CameraIntrinsics::new(30.0, 30.0, 11.5, 11.5, 24, 24).unwrap();
        let views = [(0.0, -2.0), (2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (1.4, -1.4)]
            .iter()
            .map(|&(x, z)| {
                let pose =
                    Pose::look_at(Vec3::new(x, -0.3, z), Vec3::zeros(), Vec3::new(0.0, -1.0, 0.0)).unwrap();
                let camera = Camera::new(k, pose);
                TrainView {
                    camera,
                    image: render(&truth, &camera, [0.0; 3]).image,
                }
            })
            .collect();
        let mut init = GaussianSet::empty(0);
        init.push(
            [0.05, -0.05, 0.0],
            [-1.6; 3],
            [1.0, 0.0, 0.0, 0.0],
            logit(0.5),
            &[0.0; 3],
        );
        init.push(
            [0.25, 0.1, 0.05],
            [-1.9; 3],
            [1.0, 0.0, 0.0, 0.0],
            logit(0.5),
            &[0.0; 3],
        );
        (views, init)
    }

    fn quick_cfg(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            sh_degree: 0,
            densify_from: 50,
            densify_interval: 50,
            opacity_reset_interval: 150,
            opacity_reset_until: 150,
            record_time: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_iterations_is_identity() {
        let (views, init) = scene();
        let (g, log) = train(&views, &init, &quick_cfg(0)).unwrap();
        assert_eq!(g, init);
        assert!(log.records.is_empty());
    }

    #[test]
    fn loss_decreases_and_log_is_consistent() {
        let (views, init) = scene();
        let cfg = quick_cfg(400);
        let (g, log) = train(&views, &init, &cfg).unwrap();
        assert_eq!(log.records.len(), 400);
        let l = log.losses();
        let median = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&l[320..]) < median(&l[..80]));
        assert!(log.records.windows(2).all(|w| w[0].iteration < w[1].iteration));
        assert_eq!(log.records.last().unwrap().count, g.len());
        // the reset at 150 shows up as a jump over the preceding average
        let before: f64 = l[99..149].iter().sum::<f64>() / 50.0;
        assert!(l[149] > before);
        assert_eq!(MetricsLog::from_csv(&log.to_csv()).unwrap(), log);
    }

    #[test]
    fn deterministic_given_seed() {
        let (views, init) = scene();
        let cfg = quick_cfg(120);
        let a = train(&views, &init, &cfg).unwrap();
        let b = train(&views, &init, &cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 7;
        let c = train(&views, &init, &other).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn nan_image_aborts_with_last_good() {
        let (mut views, init) = scene();
        for v in &mut views {
            v.image.data[40] = f64::NAN;
        }
        let err = train(&views, &init, &quick_cfg(10)).unwrap_err();
        assert!(err.is_numerical());
        assert_eq!(err.last_good().unwrap(), &init);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (views, init) = scene();
        assert!(matches!(
            train(&[], &init, &quick_cfg(5)),
            Err(TrainError::Data(_))
        ));
        assert!(matches!(
            train(&views, &GaussianSet::empty(0), &quick_cfg(5)),
            Err(TrainError::Data(_))
        ));
        let mut bad = quick_cfg(5);
        bad.lambda_dssim = 2.0;
        assert!(matches!(train(&views, &init, &bad), Err(TrainError::Config(_))));
    }

    #[test]
    fn views_cycle_through_epochs() {
        assert_eq!(train_indices(6, 0), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(train_indices(6, 3), vec![1, 2, 4, 5]);
    }
}
