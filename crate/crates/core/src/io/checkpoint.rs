use std::path::{Path, PathBuf};

use super::{atomic_write, read_bytes, write_gaussians, IoError};
use crate::gaussian::GaussianSet;
use crate::train::GaussianAdam;

/// Paths written for one checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointFiles {
    pub model: PathBuf,
    pub optimizer: PathBuf,
}

pub fn checkpoint_files(dir: &Path, iteration: usize) -> CheckpointFiles {
    CheckpointFiles {
        model: dir.join(format!("iter_{iteration:06}.ply")),
        optimizer: dir.join(format!("iter_{iteration:06}.adam.json")),
    }
}

/// Writes the Gaussian set as PLY and the optimizer moments as JSON.
pub fn write_checkpoint(
    dir: &Path,
    iteration: usize,
    g: &GaussianSet,
    adam: &GaussianAdam,
) -> Result<CheckpointFiles, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let files = checkpoint_files(dir, iteration);
    write_gaussians(&files.model, g)?;
    let json = serde_json::to_vec(adam).map_err(|e| IoError::format(&files.optimizer, e.to_string()))?;
    atomic_write(&files.optimizer, &json)?;
    Ok(files)
}

pub fn read_optimizer_state(path: &Path) -> Result<GaussianAdam, IoError> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| IoError::format(path, e.to_string()))
}
