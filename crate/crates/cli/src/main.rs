//! `holosplat` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "holosplat", version, about = "Depth-initialized Gaussian splatting")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HOLOSPLAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse the dataset's depth maps into one world-frame point cloud.
    Unproject(UnprojectArgs),
    /// Optimize Gaussians against the dataset's RGB frames.
    Train(TrainArgs),
    /// Write the centers of a trained model as a colored point cloud.
    Extract(ExtractArgs),
    /// Compare images or point clouds; prints one CSV row per statistic.
    Eval {
        #[command(subcommand)]
        metric: EvalCommand,
    },
    /// Generate a synthetic RGB-D dataset with known ground truth.
    Synth(SynthArgs),
    /// Render a model from one of a dataset's camera poses.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct UnprojectArgs {
    /// Dataset manifest or the directory holding manifest.json.
    #[arg(long)]
    dataset: PathBuf,
    /// Depth values beyond this (meters) are dropped.
    #[arg(long, default_value_t = holosplat::depth::DEFAULT_MAX_DEPTH)]
    max_depth: f64,
    /// Voxel edge for downsampling; 0 keeps every point.
    #[arg(long, default_value_t = 0.0)]
    voxel: f64,
    /// Output PLY.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotFormat {
    Svg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset manifest or the directory holding manifest.json.
    #[arg(long)]
    dataset: PathBuf,
    /// Initial cloud: a PLY file or a COLMAP text model directory. Without
    /// it the dataset's depth maps are unprojected.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Depth cutoff (meters) when initializing from depth.
    #[arg(long, default_value_t = holosplat::depth::DEFAULT_MAX_DEPTH)]
    max_depth: f64,
    /// Voxel downsampling of the depth-derived cloud; 0 disables it.
    #[arg(long, default_value_t = 0.0)]
    voxel: f64,
    /// Flat key = value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for metrics.csv, checkpoints and final.ply.
    #[arg(long)]
    out: PathBuf,
    /// Training iterations [config default: 30000].
    #[arg(long)]
    iterations: Option<usize>,
    /// Seed for view order and densification [config default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Spherical harmonics degree, 0 to 3 [config default: 0].
    #[arg(long)]
    sh_degree: Option<usize>,
    /// Background color as r,g,b in [0, 1] [config default: 0,0,0].
    #[arg(long)]
    background: Option<String>,
    /// Hold out every k-th view; 0 trains on all [config default: 0].
    #[arg(long)]
    holdout_every: Option<usize>,
    /// Iterations between checkpoints [config default: 5000].
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    /// Write wall-clock seconds into metrics.csv (breaks byte-identical
    /// reruns) [config default: false].
    #[arg(long)]
    record_time: bool,
    /// Any config key, as KEY=VALUE; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write a loss/PSNR chart next to metrics.csv.
    #[arg(long, value_enum)]
    plot: Option<PlotFormat>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Gaussian PLY.
    #[arg(long)]
    model: PathBuf,
    /// Drop Gaussians less opaque than this.
    #[arg(long, default_value_t = 0.005)]
    prune_opacity: f64,
    /// Output PLY.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Peak signal-to-noise ratio of two PNGs; prints `psnr,<dB>`.
    Psnr(ImagePair),
    /// Mean SSIM of two PNGs; prints `ssim,<value>`.
    Ssim(ImagePair),
    /// Nearest-neighbor distance from --pred to --ref; prints
    /// `chamfer,<mean>,<std>`. With --symmetric that row averages both
    /// directions and `chamfer_pred_to_ref` / `chamfer_ref_to_pred` rows
    /// follow.
    Chamfer(ChamferArgs),
}

#[derive(Debug, Args)]
struct ImagePair {
    /// Rendered or predicted PNG.
    #[arg(long)]
    pred: PathBuf,
    /// Reference PNG of the same size.
    #[arg(long = "ref")]
    reference: PathBuf,
}

#[derive(Debug, Args)]
struct ChamferArgs {
    /// Predicted cloud (PLY).
    #[arg(long)]
    pred: PathBuf,
    /// Reference cloud (PLY).
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Distance mapped to the top of the colormap.
    #[arg(long)]
    cmap_max: f64,
    /// Average the pred-to-ref and ref-to-pred directions.
    #[arg(long)]
    symmetric: bool,
    /// Write --pred colored by its distances to this PLY.
    #[arg(long)]
    colored_out: Option<PathBuf>,
    /// Similarity transform applied to --pred first: a text file with
    /// `scale qw qx qy qz tx ty tz`, mapping p to scale·R·p + t.
    #[arg(long)]
    transform: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Ground-truth Gaussian count.
    #[arg(long, default_value_t = 10)]
    gaussians: usize,
    /// Camera count, at least 4.
    #[arg(long, default_value_t = 20)]
    views: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image width (px).
    #[arg(long, default_value_t = 64)]
    width: u32,
    /// Image height (px).
    #[arg(long, default_value_t = 64)]
    height: u32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Gaussian PLY.
    #[arg(long)]
    model: PathBuf,
    /// Dataset supplying the camera.
    #[arg(long)]
    dataset: PathBuf,
    /// Index of the RGB frame whose camera is used.
    #[arg(long, default_value_t = 0)]
    pose_index: usize,
    /// Background color as r,g,b in [0, 1].
    #[arg(long, default_value = "0,0,0")]
    background: String,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// PNG to compare against; prints `psnr,<dB>` of the 8-bit render.
    #[arg(long)]
    compare: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Unproject(a) => commands::unproject(&a),
        Command::Train(a) => commands::train(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Eval { metric } => match metric {
            EvalCommand::Psnr(p) => commands::eval_image(&p, false),
            EvalCommand::Ssim(p) => commands::eval_image(&p, true),
            EvalCommand::Chamfer(a) => commands::eval_chamfer(&a),
        },
        Command::Synth(a) => commands::synth(&a),
        Command::Render(a) => commands::render(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("holosplat: {e}");
            e.exit_code()
        }
    }
}
