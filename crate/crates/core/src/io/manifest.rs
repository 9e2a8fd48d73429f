use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::png::{
    encode_depth_f32, encode_depth_png16, encode_rgb, read_depth_f32, read_depth_png16, read_rgb,
};
use super::{atomic_write, read_bytes, IoError};
use crate::depth::DepthFrame;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::Image;
use crate::raster::Camera;
use crate::train::TrainView;

pub const SCHEMA: &str = "holosplat-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Millimeters.
pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

/// Camera-to-world pose: unit quaternion `(w, x, y, z)` and translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEntry {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseEntry {
    fn from(p: &Pose) -> Self {
        Self {
            rotation: p.wxyz(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthEncoding {
    /// 16-bit grayscale PNG.
    #[default]
    Png16,
    /// Raw little-endian float32, row-major.
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbEntry {
    /// Relative to the manifest directory.
    pub image: String,
    pub intrinsics: CameraIntrinsics,
    pub pose: PoseEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthEntry {
    pub depth: String,
    pub intrinsics: CameraIntrinsics,
    pub pose: PoseEntry,
    /// Meters per stored unit.
    pub depth_scale: f64,
    #[serde(default)]
    pub encoding: DepthEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    #[serde(default = "default_units")]
    pub units: String,
    #[serde(default)]
    pub world_frame: String,
    #[serde(default)]
    pub rgb_frames: Vec<RgbEntry>,
    #[serde(default)]
    pub depth_frames: Vec<DepthEntry>,
}

fn default_units() -> String {
    "meters".into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub path: PathBuf,
    pub image: Image,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl RgbFrame {
    pub fn camera(&self) -> Camera {
        Camera::new(self.intrinsics, self.pose)
    }
}

/// A loaded dataset; depth is in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub rgb: Vec<RgbFrame>,
    pub depth: Vec<DepthFrame>,
}

impl Dataset {
    pub fn train_views(&self) -> Vec<TrainView> {
        self.rgb
            .iter()
            .map(|f| TrainView {
                camera: f.camera(),
                image: f.image.clone(),
            })
            .collect()
    }
}

fn check_pose(p: &PoseEntry, what: &str, problems: &mut Vec<String>) -> Option<Pose> {
    match Pose::from_wxyz(p.rotation, p.translation) {
        Ok(pose) => Some(pose),
        Err(e) => {
            problems.push(format!("{what}: {e}"));
            None
        }
    }
}

fn check_intrinsics(k: &CameraIntrinsics, what: &str, problems: &mut Vec<String>) -> bool {
    match k.validate() {
        Ok(()) => true,
        Err(e) => {
            problems.push(format!("{what}: {e}"));
            false
        }
    }
}

fn load_rgb(root: &Path, i: usize, e: &RgbEntry) -> Result<RgbFrame, Vec<String>> {
    let what = format!("rgb_frames[{i}] ({})", e.image);
    let mut problems = Vec::new();
    let pose = check_pose(&e.pose, &what, &mut problems);
    let k_ok = check_intrinsics(&e.intrinsics, &what, &mut problems);
    let path = root.join(&e.image);
    let image = match read_rgb(&path) {
        Ok(img) => Some(img),
        Err(err) => {
            problems.push(format!("{what}: {err}"));
            None
        }
    };
    if let (Some(img), true) = (&image, k_ok) {
        if (img.width, img.height) != (e.intrinsics.width as usize, e.intrinsics.height as usize) {
            problems.push(format!(
                "{what}: image is {}x{} but intrinsics say {}x{}",
                img.width, img.height, e.intrinsics.width, e.intrinsics.height
            ));
        }
    }
    match (problems.is_empty(), image, pose) {
        (true, Some(image), Some(pose)) => Ok(RgbFrame {
            path,
            image,
            intrinsics: e.intrinsics,
            pose,
        }),
        _ => Err(problems),
    }
}

fn load_depth(root: &Path, i: usize, e: &DepthEntry) -> Result<DepthFrame, Vec<String>> {
    let what = format!("depth_frames[{i}] ({})", e.depth);
    let mut problems = Vec::new();
    let pose = check_pose(&e.pose, &what, &mut problems);
    let k_ok = check_intrinsics(&e.intrinsics, &what, &mut problems);
    if !(e.depth_scale > 0.0 && e.depth_scale.is_finite()) {
        problems.push(format!(
            "{what}: depth_scale must be positive, got {}",
            e.depth_scale
        ));
    }
    if !problems.is_empty() || !k_ok {
        return Err(problems);
    }
    let (w, h) = (e.intrinsics.width as usize, e.intrinsics.height as usize);
    let path = root.join(&e.depth);
    let depth = match e.encoding {
        DepthEncoding::Png16 => read_depth_png16(&path, e.depth_scale).and_then(|(dw, dh, d)| {
            if (dw, dh) != (w, h) {
                Err(IoError::format(
                    &path,
                    format!("depth is {dw}x{dh} but intrinsics say {w}x{h}"),
                ))
            } else {
                Ok(d)
            }
        }),
        DepthEncoding::F32 => read_depth_f32(&path, w, h, e.depth_scale),
    };
    let depth = depth.map_err(|err| vec![format!("{what}: {err}")])?;
    DepthFrame::new(depth, e.intrinsics, pose.expect("checked above"))
        .map_err(|err| vec![format!("{what}: {err}")])
}

/// Reads a manifest and every frame it lists. All problems are reported
/// together.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, IoError> {
    let manifest_path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_FILE)
    } else {
        manifest_path.to_path_buf()
    };
    let bytes = read_bytes(&manifest_path)?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| IoError::format(&manifest_path, e.to_string()))?;
    if manifest.schema != SCHEMA {
        return Err(IoError::format(
            &manifest_path,
            format!("unsupported schema {:?}, expected {SCHEMA:?}", manifest.schema),
        ));
    }
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let rgb: Vec<_> = manifest
        .rgb_frames
        .par_iter()
        .enumerate()
        .map(|(i, e)| load_rgb(&root, i, e))
        .collect();
    let depth: Vec<_> = manifest
        .depth_frames
        .par_iter()
        .enumerate()
        .map(|(i, e)| load_depth(&root, i, e))
        .collect();
    let mut problems = Vec::new();
    let mut rgb_ok = Vec::new();
    for r in rgb {
        match r {
            Ok(f) => rgb_ok.push(f),
            Err(p) => problems.extend(p),
        }
    }
    let mut depth_ok = Vec::new();
    for r in depth {
        match r {
            Ok(f) => depth_ok.push(f),
            Err(p) => problems.extend(p),
        }
    }
    if !problems.is_empty() {
        return Err(IoError::Manifest {
            path: manifest_path,
            problems,
        });
    }
    Ok(Dataset {
        root,
        manifest,
        rgb: rgb_ok,
        depth: depth_ok,
    })
}

/// Writes frames as `rgb/NNN.png`, `depth/NNN.{png,f32}` and a manifest
/// into `dir`. Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    rgb: &[(Image, Camera)],
    depth: &[DepthFrame],
    encoding: DepthEncoding,
    depth_scale: f64,
) -> Result<PathBuf, IoError> {
    for sub in ["rgb", "depth"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| IoError::io(&dir.join(sub), e))?;
    }
    let mut manifest = DatasetManifest {
        schema: SCHEMA.into(),
        units: default_units(),
        world_frame: "right-handed, camera +z forward, +x right, +y down".into(),
        rgb_frames: Vec::new(),
        depth_frames: Vec::new(),
    };
    for (i, (img, cam)) in rgb.iter().enumerate() {
        let rel = format!("rgb/{i:03}.png");
        let path = dir.join(&rel);
        atomic_write(&path, &encode_rgb(img, &path)?)?;
        manifest.rgb_frames.push(RgbEntry {
            image: rel,
            intrinsics: cam.intrinsics,
            pose: PoseEntry::from(&cam.pose),
        });
    }
    for (i, f) in depth.iter().enumerate() {
        let (rel, bytes) = match encoding {
            DepthEncoding::Png16 => {
                let rel = format!("depth/{i:03}.png");
                let bytes = encode_depth_png16(
                    &f.depth,
                    f.intrinsics.width as usize,
                    f.intrinsics.height as usize,
                    depth_scale,
                    &dir.join(&rel),
                )?;
                (rel, bytes)
            }
            DepthEncoding::F32 => (
                format!("depth/{i:03}.f32"),
                encode_depth_f32(&f.depth, depth_scale),
            ),
        };
        atomic_write(&dir.join(&rel), &bytes)?;
        manifest.depth_frames.push(DepthEntry {
            depth: rel,
            intrinsics: f.intrinsics,
            pose: PoseEntry::from(&f.pose),
            depth_scale,
            encoding,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| IoError::format(&path, e.to_string()))?;
    atomic_write(&path, &json)?;
    Ok(path)
}
