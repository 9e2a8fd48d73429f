use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holosplat::cloud::PointCloud;
use holosplat::depth::{merge_frames, DepthFrame, DEFAULT_MAX_DEPTH};
use holosplat::gaussian::{init_from_cloud, logit, GaussianSet};
use holosplat::geometry::Vec3;
use holosplat::io::{
    encode_gaussians, load_dataset, read_cloud, read_rgb, write_cloud, write_gaussians, GROUND_TRUTH_FILE,
};
use holosplat::train::MetricsLog;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_holosplat"));
    c.env("RUST_LOG", "warn").env_remove("HOLOSPLAT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic dataset; returns (tempdir, dataset dir).
fn synth(views: usize, size: u32, seed: u64) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (v, s, sd) = (views.to_string(), size.to_string(), seed.to_string());
    let out = ok(&[
        "synth",
        "--gaussians",
        "4",
        "--views",
        &v,
        "--width",
        &s,
        "--height",
        &s,
        "--seed",
        &sd,
        "--out",
        p(&data),
    ]);
    assert!(out.starts_with("manifest,"));
    (dir, data)
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let (_a, da) = synth(5, 32, 3);
    let (_b, db) = synth(5, 32, 3);
    let fa = files_under(&da);
    assert!(fa.len() >= 5 + 5 + 2);
    assert_eq!(fa, files_under(&db));
    let (_c, dc) = synth(5, 32, 4);
    assert_ne!(fa, files_under(&dc));
}

#[test]
fn synth_rejects_too_few_views() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--views", "3", "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unproject_count_matches_depth_masks() {
    let (dir, data) = synth(6, 32, 1);
    let out = dir.path().join("cloud.ply");
    let printed = ok(&["unproject", "--dataset", p(&data), "--out", p(&out)]);
    let ds = load_dataset(&data).unwrap();
    let valid: usize = ds
        .depth
        .iter()
        .map(|f| {
            f.depth
                .iter()
                .filter(|&&d| DepthFrame::is_valid_depth(d, DEFAULT_MAX_DEPTH))
                .count()
        })
        .sum();
    assert!(valid > 0);
    assert_eq!(printed.trim(), format!("points,{valid}"));
    assert_eq!(read_cloud(&out).unwrap().len(), valid);
}

#[test]
fn unproject_tiny_cutoff_warns_and_succeeds() {
    let (dir, data) = synth(4, 32, 1);
    let out = dir.path().join("cloud.ply");
    let o = bin()
        .env("RUST_LOG", "warn")
        .args([
            "unproject",
            "--dataset",
            p(&data),
            "--max-depth",
            "0.001",
            "--out",
            p(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "points,0");
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty cloud"));
    assert!(read_cloud(&out).unwrap().is_empty());
}

#[test]
fn unproject_huge_voxel_gives_one_point() {
    let (dir, data) = synth(4, 32, 1);
    let out = dir.path().join("cloud.ply");
    let printed = ok(&[
        "unproject",
        "--dataset",
        p(&data),
        "--voxel",
        "100",
        "--out",
        p(&out),
    ]);
    assert_eq!(printed.trim(), "points,1");
    assert_eq!(read_cloud(&out).unwrap().len(), 1);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "unproject",
        "--dataset",
        p(&dir.path().join("nope")),
        "--out",
        p(&dir.path().join("c.ply")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["unproject", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(
        code(&run(&["eval", "chamfer", "--pred", "a.ply", "--ref", "b.ply"])),
        1
    );
    assert_eq!(code(&run(&["--help"])), 0);
    let (dir, data) = synth(4, 32, 1);
    let out = dir.path().join("run");
    let bad_key = run(&[
        "train",
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--set",
        "nope=1",
    ]);
    assert_eq!(code(&bad_key), 1);
    let bad_value = run(&[
        "train",
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--set",
        "lambda_dssim=3",
    ]);
    assert_eq!(code(&bad_value), 1);
    let zero = run(&["--threads", "0", "synth", "--out", p(&out)]);
    assert_eq!(code(&zero), 1);
}

#[test]
fn train_zero_iterations_writes_initial_set() {
    let (dir, data) = synth(4, 32, 2);
    let out = dir.path().join("run");
    let printed = ok(&[
        "train",
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--iterations",
        "0",
    ]);
    assert!(printed.contains("final_psnr,"));
    let ds = load_dataset(&data).unwrap();
    let cloud = merge_frames(&ds.depth, DEFAULT_MAX_DEPTH).unwrap();
    let init = init_from_cloud(&cloud, holosplat::train::TrainConfig::default().sh_degree).unwrap();
    assert_eq!(
        std::fs::read(out.join("final.ply")).unwrap(),
        encode_gaussians(&init)
    );
    let log = MetricsLog::from_csv(&std::fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
    assert!(log.records.is_empty());
}

fn short_train(data: &Path, out: &Path, seed: &str, extra: &[&str]) -> String {
    let mut args = vec![
        "train",
        "--dataset",
        p(data),
        "--out",
        p(out),
        "--iterations",
        "60",
        "--seed",
        seed,
        "--sh-degree",
        "1",
        "--checkpoint-interval",
        "25",
        "--set",
        "densify_from=10",
        "--set",
        "densify_interval=20",
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn train_is_reproducible_and_writes_artifacts() {
    let (dir, data) = synth(5, 32, 2);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let printed = short_train(&data, &a, "5", &["--plot", "svg"]);
    short_train(&data, &b, "5", &[]);
    short_train(&data, &c, "6", &[]);

    let csv_a = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert_ne!(csv_a, std::fs::read_to_string(c.join("metrics.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("final.ply")).unwrap(),
        std::fs::read(b.join("final.ply")).unwrap()
    );

    let log = MetricsLog::from_csv(&csv_a).unwrap();
    assert_eq!(log.records.len(), 60);
    assert!(log.records.iter().all(|r| r.seconds == 0.0));
    for it in [25, 50] {
        assert!(a.join(format!("checkpoints/iter_{it:06}.ply")).exists());
        assert!(a.join(format!("checkpoints/iter_{it:06}.adam.json")).exists());
    }
    assert!(!a.join("checkpoints/iter_000060.ply").exists());
    assert!(a.join("metrics.svg").exists() && !b.join("metrics.svg").exists());
    let cfg = std::fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(cfg.contains("iterations = 60") && cfg.contains("seed = 5"));

    let psnr: f64 = printed
        .lines()
        .find_map(|l| l.strip_prefix("final_psnr,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(psnr.is_finite() && psnr > 10.0);
    assert!(printed.contains(&format!("gaussians,{}", log.records.last().unwrap().count)));
}

#[test]
fn train_from_ply_init_and_config_file() {
    let (dir, data) = synth(4, 32, 2);
    let cloud_path = dir.path().join("init.ply");
    ok(&[
        "unproject",
        "--dataset",
        p(&data),
        "--voxel",
        "0.05",
        "--out",
        p(&cloud_path),
    ]);
    let config = dir.path().join("train.cfg");
    std::fs::write(&config, "# short run\niterations = 5\nsh_degree = 0\n").unwrap();
    let out = dir.path().join("run");
    let printed = ok(&[
        "train",
        "--dataset",
        p(&data),
        "--init",
        p(&cloud_path),
        "--config",
        p(&config),
        "--out",
        p(&out),
        "--holdout-every",
        "2",
    ]);
    assert!(printed.contains("holdout_psnr,"));
    let log = MetricsLog::from_csv(&std::fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(log.records.len(), 5);
}

#[test]
fn train_with_too_small_cloud_is_data_error() {
    let (dir, data) = synth(4, 32, 2);
    let cloud_path = dir.path().join("tiny.ply");
    write_cloud(&cloud_path, &PointCloud::from_positions(vec![Vec3::zeros(); 3])).unwrap();
    let o = run(&[
        "train",
        "--dataset",
        p(&data),
        "--init",
        p(&cloud_path),
        "--out",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergent_training_exits_3_with_last_good() {
    let (dir, data) = synth(4, 32, 2);
    let out = dir.path().join("run");
    let o = run(&[
        "train",
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--iterations",
        "20",
        "--set",
        "lr_scale=1e300",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("last_good.ply").exists());
    assert!(!out.join("final.ply").exists());
    // everything logged before the failure is still parseable
    MetricsLog::from_csv(&std::fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
}

#[test]
fn extract_filters_by_opacity() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = GaussianSet::empty(0);
    let opacities = [0.001, 0.004, 0.005, 0.3, 0.9, 0.0049];
    for (i, &o) in opacities.iter().enumerate() {
        g.push(
            [i as f64, 0.0, 0.0],
            [-2.0; 3],
            [1.0, 0.0, 0.0, 0.0],
            logit(o),
            &[0.0; 3],
        );
    }
    let model = dir.path().join("m.ply");
    write_gaussians(&model, &g).unwrap();
    let stored = holosplat::io::read_gaussians(&model).unwrap();
    for thr in ["0.005", "0.5", "0"] {
        let out = dir.path().join(format!("c{thr}.ply"));
        let printed = ok(&[
            "extract",
            "--model",
            p(&model),
            "--prune-opacity",
            thr,
            "--out",
            p(&out),
        ]);
        let t: f64 = thr.parse().unwrap();
        let want = (0..stored.len()).filter(|&i| stored.opacity(i) >= t).count();
        assert_eq!(printed.trim(), format!("points,{want}"));
        assert_eq!(read_cloud(&out).unwrap().len(), want);
    }
    let garbage = dir.path().join("bad.ply");
    std::fs::write(&garbage, b"ply\nnot a header").unwrap();
    let o = run(&[
        "extract",
        "--model",
        p(&garbage),
        "--out",
        p(&dir.path().join("x.ply")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_images() {
    let (_dir, data) = synth(4, 32, 1);
    let ds = load_dataset(&data).unwrap();
    let (a, b) = (&ds.rgb[0].path, &ds.rgb[1].path);
    assert_eq!(
        ok(&["eval", "psnr", "--pred", p(a), "--ref", p(a)]).trim(),
        "psnr,inf"
    );
    assert_eq!(
        ok(&["eval", "ssim", "--pred", p(a), "--ref", p(a)]).trim(),
        "ssim,1.0"
    );
    let (ia, ib) = (read_rgb(a).unwrap(), read_rgb(b).unwrap());
    let want = holosplat::eval::psnr(&ia, &ib, 1.0).unwrap();
    assert_eq!(
        ok(&["eval", "psnr", "--pred", p(a), "--ref", p(b)]).trim(),
        format!("psnr,{want:?}")
    );
    let other = _dir.path().join("small.png");
    holosplat::io::write_rgb(&other, &holosplat::image::Image::new(8, 8, 3)).unwrap();
    assert_eq!(
        code(&run(&["eval", "psnr", "--pred", p(a), "--ref", p(&other)])),
        2
    );
    // SSIM needs at least one full window
    assert_eq!(
        code(&run(&["eval", "ssim", "--pred", p(&other), "--ref", p(&other)])),
        2
    );
}

fn brute(pred: &[Vec3], reference: &[Vec3]) -> (f64, f64) {
    let d: Vec<f64> = pred
        .iter()
        .map(|a| {
            reference
                .iter()
                .map(|b| (a - b).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
    (mean, var.sqrt())
}

fn row(text: &str, name: &str) -> (f64, f64) {
    let line = text.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
    let v: Vec<f64> = line.split(',').skip(1).map(|t| t.parse().unwrap()).collect();
    (v[0], v[1])
}

#[test]
fn eval_chamfer_rows() {
    let dir = tempfile::tempdir().unwrap();
    // exactly representable in float32 so the PLY round trip is lossless
    let pred = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 2.5, 0.0),
    ];
    let reference = vec![Vec3::new(0.0, 0.0, 0.5), Vec3::new(3.0, 0.0, 0.0)];
    let (pp, rp) = (dir.path().join("pred.ply"), dir.path().join("ref.ply"));
    write_cloud(&pp, &PointCloud::from_positions(pred.clone())).unwrap();
    write_cloud(&rp, &PointCloud::from_positions(reference.clone())).unwrap();

    let same = ok(&[
        "eval",
        "chamfer",
        "--pred",
        p(&pp),
        "--ref",
        p(&pp),
        "--cmap-max",
        "1",
    ]);
    assert_eq!(same.trim(), "chamfer,0.0,0.0");

    let colored = dir.path().join("colored.ply");
    let text = ok(&[
        "eval",
        "chamfer",
        "--pred",
        p(&pp),
        "--ref",
        p(&rp),
        "--cmap-max",
        "2",
        "--colored-out",
        p(&colored),
    ]);
    assert_eq!(text.lines().count(), 1);
    let (m, s) = row(&text, "chamfer");
    let (bm, bs) = brute(&pred, &reference);
    assert!((m - bm).abs() < 1e-12 && (s - bs).abs() < 1e-12);
    let c = read_cloud(&colored).unwrap();
    assert_eq!(c.positions, pred);
    assert!(c.colors.is_some());

    let sym = ok(&[
        "eval",
        "chamfer",
        "--pred",
        p(&pp),
        "--ref",
        p(&rp),
        "--cmap-max",
        "2",
        "--symmetric",
    ]);
    let fwd = row(&sym, "chamfer_pred_to_ref");
    let back = row(&sym, "chamfer_ref_to_pred");
    let (rm, _) = brute(&reference, &pred);
    assert!((fwd.0 - bm).abs() < 1e-12 && (back.0 - rm).abs() < 1e-12);
    let both = row(&sym, "chamfer");
    assert!((both.0 - 0.5 * (bm + rm)).abs() < 1e-12);

    let empty = dir.path().join("empty.ply");
    write_cloud(&empty, &PointCloud::default()).unwrap();
    let o = run(&[
        "eval",
        "chamfer",
        "--pred",
        p(&empty),
        "--ref",
        p(&rp),
        "--cmap-max",
        "1",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_chamfer_applies_similarity() {
    let dir = tempfile::tempdir().unwrap();
    let reference = vec![
        Vec3::new(1.0, 2.0, 3.0),
        Vec3::new(-2.0, 0.5, 1.0),
        Vec3::new(0.0, 0.0, 4.0),
    ];
    // pred = (R⁻¹ (ref - t)) / s for a 90° turn about z, s = 2, t = (1, 0, -1)
    let pred: Vec<Vec3> = reference
        .iter()
        .map(|r| {
            let q = r - Vec3::new(1.0, 0.0, -1.0);
            Vec3::new(q.y, -q.x, q.z) / 2.0
        })
        .collect();
    let (pp, rp) = (dir.path().join("pred.ply"), dir.path().join("ref.ply"));
    write_cloud(&pp, &PointCloud::from_positions(pred)).unwrap();
    write_cloud(&rp, &PointCloud::from_positions(reference)).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let tf = dir.path().join("sim.txt");
    std::fs::write(&tf, format!("2 {h:?} 0 0 {h:?} 1 0 -1\n")).unwrap();
    let raw = row(
        &ok(&[
            "eval",
            "chamfer",
            "--pred",
            p(&pp),
            "--ref",
            p(&rp),
            "--cmap-max",
            "1",
        ]),
        "chamfer",
    );
    assert!(raw.0 > 0.5);
    let aligned = ok(&[
        "eval",
        "chamfer",
        "--pred",
        p(&pp),
        "--ref",
        p(&rp),
        "--cmap-max",
        "1",
        "--transform",
        p(&tf),
    ]);
    assert!(row(&aligned, "chamfer").0 < 1e-6);
    std::fs::write(&tf, "1 1 0 0\n").unwrap();
    let o = run(&[
        "eval",
        "chamfer",
        "--pred",
        p(&pp),
        "--ref",
        p(&rp),
        "--cmap-max",
        "1",
        "--transform",
        p(&tf),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn render_modes() {
    let (dir, data) = synth(4, 32, 1);
    let ds = load_dataset(&data).unwrap();
    let gt_model = data.join(GROUND_TRUTH_FILE);
    let out = dir.path().join("r.png");
    for i in 0..ds.rgb.len() {
        let idx = i.to_string();
        let text = ok(&[
            "render",
            "--model",
            p(&gt_model),
            "--dataset",
            p(&data),
            "--pose-index",
            &idx,
            "--out",
            p(&out),
            "--compare",
            p(&ds.rgb[i].path),
        ]);
        assert_eq!(text.trim(), "psnr,inf");
        assert_eq!(read_rgb(&out).unwrap(), ds.rgb[i].image);
    }

    let mut g = holosplat::io::read_gaussians(&gt_model).unwrap();
    for c in &mut g.centers {
        c[0] += 0.05;
    }
    let moved = dir.path().join("moved.ply");
    write_gaussians(&moved, &g).unwrap();
    let text = ok(&[
        "render",
        "--model",
        p(&moved),
        "--dataset",
        p(&data),
        "--out",
        p(&out),
        "--compare",
        p(&ds.rgb[0].path),
    ]);
    let v: f64 = text.trim().strip_prefix("psnr,").unwrap().parse().unwrap();
    assert!(v.is_finite() && v > 5.0);

    let empty = dir.path().join("empty.ply");
    write_gaussians(&empty, &GaussianSet::empty(0)).unwrap();
    ok(&[
        "render",
        "--model",
        p(&empty),
        "--dataset",
        p(&data),
        "--background",
        "1,0.5,0",
        "--out",
        p(&out),
    ]);
    let img = read_rgb(&out).unwrap();
    assert!(img.data.chunks(3).all(|px| px == [1.0, 128.0 / 255.0, 0.0]));

    let o = run(&[
        "render",
        "--model",
        p(&empty),
        "--dataset",
        p(&data),
        "--pose-index",
        "99",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let (dir, data) = synth(4, 32, 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |out: &Path| {
        vec![
            "train".to_string(),
            "--dataset".into(),
            p(&data).into(),
            "--out".into(),
            p(out).into(),
            "--iterations".into(),
            "30".into(),
        ]
    };
    let o1 = bin()
        .env("HOLOSPLAT_THREADS", "1")
        .args(args(&a))
        .output()
        .unwrap();
    let o2 = bin().arg("--threads").arg("3").args(args(&b)).output().unwrap();
    assert_eq!((code(&o1), code(&o2)), (0, 0));
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("final.ply")).unwrap(),
        std::fs::read(b.join("final.ply")).unwrap()
    );
}
