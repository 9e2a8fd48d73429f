//! Datasets, point-cloud and Gaussian PLY files, COLMAP text models,
//! PNG images and synthetic scenes.

mod checkpoint;
mod colmap;
mod manifest;
mod ply;
mod png;
mod synthetic;

pub use checkpoint::{checkpoint_files, read_optimizer_state, write_checkpoint, CheckpointFiles};
pub use colmap::{import_colmap_text, ColmapImage, ColmapModel};
pub use manifest::{
    load_dataset, write_dataset, Dataset, DatasetManifest, DepthEncoding, DepthEntry, PoseEntry, RgbEntry,
    RgbFrame, DEFAULT_DEPTH_SCALE, MANIFEST_FILE, SCHEMA,
};
pub use ply::{
    decode_cloud, decode_gaussians, encode_cloud, encode_gaussians, read_cloud, read_gaussians, write_cloud,
    write_gaussians,
};
pub use png::{
    decode_rgb, encode_depth_f32, encode_depth_png16, encode_rgb, read_depth_f32, read_depth_png16, read_rgb,
    write_rgb,
};
pub use synthetic::{
    generate_synthetic, render_depth, write_synthetic, SyntheticScene, SyntheticSpec, DEPTH_ALPHA_MIN,
    GROUND_TRUTH_FILE,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: invalid dataset:\n  {}", problems.join("\n  "))]
    Manifest { path: PathBuf, problems: Vec<String> },
    #[error("{path}:{line}: {message}")]
    Colmap {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| IoError::Invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(IoError::io(path, e));
    }
    Ok(())
}
