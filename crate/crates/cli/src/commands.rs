use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use holosplat::cloud::PointCloud;
use holosplat::depth::{downsample_voxel, merge_frames};
use holosplat::eval::{chamfer, distance_colored_cloud, psnr, ssim, ChamferReport};
use holosplat::gaussian::{extract_centers, init_from_cloud, GaussianSet};
use holosplat::geometry::Pose;
use holosplat::io::{
    atomic_write, generate_synthetic, import_colmap_text, load_dataset, read_cloud, read_gaussians, read_rgb,
    write_checkpoint, write_cloud, write_gaussians, write_rgb, write_synthetic, Dataset, SyntheticSpec,
};
use holosplat::raster::render as render_image;
use holosplat::train::{
    train_indices, train_with_observer, view_psnrs, GaussianAdam, MetricsRecord, TrainConfig, TrainObserver,
    METRICS_HEADER,
};

use crate::error::CliError;
use crate::plot::metrics_svg;
use crate::{
    ChamferArgs, ExtractArgs, ImagePair, PlotFormat, RenderArgs, SynthArgs, TrainArgs, UnprojectArgs,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_MODEL: &str = "final.ply";
pub const LAST_GOOD_MODEL: &str = "last_good.ply";
pub const CONFIG_FILE: &str = "config.txt";
const PROGRESS_EVERY: usize = 500;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn depth_cloud(dataset: &Dataset, max_depth: f64) -> Result<PointCloud, CliError> {
    if !(max_depth > 0.0) {
        return Err(CliError::Usage(format!(
            "--max-depth must be positive, got {max_depth}"
        )));
    }
    if dataset.depth.is_empty() {
        return Err(CliError::Data("dataset has no depth frames".into()));
    }
    Ok(merge_frames(&dataset.depth, max_depth)?)
}

fn maybe_downsample(cloud: PointCloud, voxel: f64) -> Result<PointCloud, CliError> {
    if voxel == 0.0 {
        return Ok(cloud);
    }
    if !(voxel > 0.0) {
        return Err(CliError::Usage(format!(
            "--voxel must be non-negative, got {voxel}"
        )));
    }
    Ok(downsample_voxel(&cloud, voxel)?)
}

pub fn unproject(a: &UnprojectArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&a.dataset)?;
    let cloud = maybe_downsample(depth_cloud(&dataset, a.max_depth)?, a.voxel)?;
    if cloud.is_empty() {
        log::warn!(
            "no depth value lies within {} m; writing an empty cloud",
            a.max_depth
        );
    }
    write_cloud(&a.out, &cloud)?;
    println!("points,{}", cloud.len());
    Ok(())
}

fn parse_rgb(text: &str) -> Result<[f64; 3], CliError> {
    let mut c = TrainConfig::default();
    c.set("background", text)?;
    c.validate()?;
    Ok(c.background)
}

fn build_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = &a.config {
        let text =
            std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        cfg.apply_str(&text)?;
    }
    let flags = [
        ("iterations", a.iterations.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("sh_degree", a.sh_degree.map(|v| v.to_string())),
        ("background", a.background.clone()),
        ("holdout_every_k", a.holdout_every.map(|v| v.to_string())),
        (
            "checkpoint_interval",
            a.checkpoint_interval.map(|v| v.to_string()),
        ),
        ("record_time", a.record_time.then(|| "true".to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Streams metrics to CSV and writes checkpoints while training runs.
struct Recorder {
    csv: File,
    csv_path: PathBuf,
    checkpoints: PathBuf,
    iterations: usize,
}

impl TrainObserver for Recorder {
    fn on_record(&mut self, r: &MetricsRecord) -> Result<(), String> {
        writeln!(self.csv, "{}", r.csv_line()).map_err(|e| format!("{}: {e}", self.csv_path.display()))?;
        if r.iteration % PROGRESS_EVERY == 0 || r.iteration == self.iterations {
            log::info!(
                "iteration {}/{}: loss {:.5}, psnr {:.2} dB, {} gaussians",
                r.iteration,
                self.iterations,
                r.loss,
                r.psnr,
                r.count
            );
        }
        Ok(())
    }

    fn on_checkpoint(
        &mut self,
        iteration: usize,
        g: &GaussianSet,
        adam: &GaussianAdam,
    ) -> Result<(), String> {
        self.csv.flush().map_err(|e| e.to_string())?;
        let f = write_checkpoint(&self.checkpoints, iteration, g, adam).map_err(|e| e.to_string())?;
        log::info!("checkpoint {}", f.model.display());
        Ok(())
    }
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = build_config(a)?;
    let dataset = load_dataset(&a.dataset)?;
    let cloud = match &a.init {
        Some(p) if p.is_dir() => import_colmap_text(p)?.cloud,
        Some(p) => read_cloud(p)?,
        None => depth_cloud(&dataset, a.max_depth)?,
    };
    let cloud = maybe_downsample(cloud, a.voxel)?;
    log::info!("initial cloud: {} points", cloud.len());
    let init = init_from_cloud(&cloud, cfg.sh_degree)?;
    let views = dataset.train_views();

    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    atomic_write(&a.out.join(CONFIG_FILE), cfg.to_key_values().as_bytes())?;
    let csv_path = a.out.join(METRICS_FILE);
    let mut csv = File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    writeln!(csv, "{METRICS_HEADER}").map_err(|e| io_err(&csv_path, e))?;
    let mut recorder = Recorder {
        csv,
        csv_path: csv_path.clone(),
        checkpoints: a.out.join("checkpoints"),
        iterations: cfg.iterations,
    };

    let outcome = match train_with_observer(&views, &init, &cfg, &mut recorder) {
        Ok(o) => o,
        Err(e) => {
            if let Some(g) = e.last_good() {
                let p = a.out.join(LAST_GOOD_MODEL);
                write_gaussians(&p, g)?;
                log::error!("last finite parameters written to {}", p.display());
            }
            return Err(e.into());
        }
    };
    recorder.csv.flush().map_err(|e| io_err(&csv_path, e))?;
    write_gaussians(&a.out.join(FINAL_MODEL), &outcome.gaussians)?;
    if a.plot == Some(PlotFormat::Svg) {
        atomic_write(&a.out.join("metrics.svg"), metrics_svg(&outcome.log).as_bytes())?;
    }

    let all = view_psnrs(&outcome.gaussians, &views, cfg.background);
    let used = train_indices(views.len(), cfg.holdout_every_k);
    let mean = |idx: &[usize]| idx.iter().map(|&i| all[i]).sum::<f64>() / idx.len() as f64;
    println!("final_psnr,{:?}", mean(&used));
    if cfg.holdout_every_k > 0 {
        let held: Vec<usize> = (0..views.len()).filter(|i| !used.contains(i)).collect();
        println!("holdout_psnr,{:?}", mean(&held));
    }
    if let Some(last) = outcome.log.records.last() {
        println!("final_loss,{:?}", last.loss);
    }
    println!("gaussians,{}", outcome.gaussians.len());
    Ok(())
}

pub fn extract(a: &ExtractArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.prune_opacity) {
        return Err(CliError::Usage(format!(
            "--prune-opacity must be in [0, 1], got {}",
            a.prune_opacity
        )));
    }
    let g = read_gaussians(&a.model)?;
    let cloud = extract_centers(&g, a.prune_opacity);
    write_cloud(&a.out, &cloud)?;
    println!("points,{}", cloud.len());
    Ok(())
}

pub fn eval_image(p: &ImagePair, structural: bool) -> Result<(), CliError> {
    let pred = read_rgb(&p.pred)?;
    let reference = read_rgb(&p.reference)?;
    if structural {
        println!("ssim,{:?}", ssim(&pred, &reference)?);
    } else {
        println!("psnr,{:?}", psnr(&pred, &reference, 1.0)?);
    }
    Ok(())
}

/// Parses `scale qw qx qy qz tx ty tz`; `#` starts a comment.
pub fn parse_similarity(text: &str) -> Result<(f64, Pose), String> {
    let nums = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    let [s, qw, qx, qy, qz, tx, ty, tz] = nums[..] else {
        return Err(format!("expected 8 numbers, got {}", nums.len()));
    };
    if !(s > 0.0 && s.is_finite()) {
        return Err(format!("scale must be positive, got {s}"));
    }
    let pose = Pose::from_wxyz([qw, qx, qy, qz], [tx, ty, tz]).map_err(|e| e.to_string())?;
    Ok((s, pose))
}

fn print_chamfer(name: &str, r: &ChamferReport) {
    println!("{name},{:?},{:?}", r.mean, r.std);
}

pub fn eval_chamfer(a: &ChamferArgs) -> Result<(), CliError> {
    if !(a.cmap_max > 0.0 && a.cmap_max.is_finite()) {
        return Err(CliError::Usage(format!(
            "--cmap-max must be positive, got {}",
            a.cmap_max
        )));
    }
    let mut pred = read_cloud(&a.pred)?;
    let reference = read_cloud(&a.reference)?;
    if let Some(path) = &a.transform {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let (s, pose) =
            parse_similarity(&text).map_err(|m| CliError::Data(format!("{}: {m}", path.display())))?;
        let r = pose.rotation_matrix();
        for p in &mut pred.positions {
            *p = s * (r * *p) + pose.translation;
        }
    }
    let result = chamfer(&pred, &reference, a.symmetric)?;
    match &result.backward {
        Some(back) => {
            println!("chamfer,{:?},{:?}", result.mean(), result.std());
            print_chamfer("chamfer_pred_to_ref", &result.forward);
            print_chamfer("chamfer_ref_to_pred", back);
        }
        None => print_chamfer("chamfer", &result.forward),
    }
    if let Some(out) = &a.colored_out {
        write_cloud(out, &distance_colored_cloud(&result.forward, &pred, a.cmap_max)?)?;
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        gaussians: a.gaussians,
        views: a.views,
        seed: a.seed,
        width: a.width,
        height: a.height,
        ..Default::default()
    };
    let scene = generate_synthetic(&spec)?;
    let manifest = write_synthetic(&scene, &a.out)?;
    println!("manifest,{}", manifest.display());
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let background = parse_rgb(&a.background)?;
    let g = read_gaussians(&a.model)?;
    let dataset = load_dataset(&a.dataset)?;
    let frame = dataset.rgb.get(a.pose_index).ok_or_else(|| {
        CliError::Data(format!(
            "pose index {} out of range; dataset has {} RGB frames",
            a.pose_index,
            dataset.rgb.len()
        ))
    })?;
    let img = render_image(&g, &frame.camera(), background).image.quantized_u8();
    write_rgb(&a.out, &img)?;
    if let Some(gt) = &a.compare {
        println!("psnr,{:?}", psnr(&img, &read_rgb(gt)?, 1.0)?);
    }
    Ok(())
}
