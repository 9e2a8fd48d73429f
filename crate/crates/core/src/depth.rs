//! Depth frames to point clouds.
//!
//! Depth values are z-depth along the optical axis in meters. Zero and NaN
//! both mean "no return".

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::{transform_point, unproject, CameraIntrinsics, Pixel, Pose, Vec3};

/// Depth mask applied to sensor depth unless configured otherwise.
pub const DEFAULT_MAX_DEPTH: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("depth grid has {got} values, intrinsics expect {width}x{height}")]
    Shape { got: usize, width: u32, height: u32 },
    #[error("no depth frames given")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("negative depth {value} at pixel ({x}, {y})")]
    NegativeDepth { x: usize, y: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    /// Row-major `height × width` grid.
    pub depth: Vec<f64>,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl DepthFrame {
    pub fn new(depth: Vec<f64>, intrinsics: CameraIntrinsics, pose: Pose) -> Result<Self, DepthError> {
        let frame = Self {
            depth,
            intrinsics,
            pose,
        };
        frame.check_shape()?;
        let w = intrinsics.width as usize;
        if let Some(i) = frame.depth.iter().position(|d| d.is_finite() && *d < 0.0) {
            return Err(DepthError::NegativeDepth {
                x: i % w,
                y: i / w,
                value: frame.depth[i],
            });
        }
        Ok(frame)
    }

    fn check_shape(&self) -> Result<(), DepthError> {
        if self.depth.len() != self.intrinsics.pixel_count() {
            return Err(DepthError::Shape {
                got: self.depth.len(),
                width: self.intrinsics.width,
                height: self.intrinsics.height,
            });
        }
        Ok(())
    }

    pub fn is_valid_depth(d: f64, max_depth: f64) -> bool {
        d.is_finite() && d > 0.0 && d <= max_depth
    }
}

/// One camera-frame point per pixel with `0 < depth ≤ max_depth`.
pub fn unproject_depth(frame: &DepthFrame, max_depth: f64) -> Result<PointCloud, DepthError> {
    if !(max_depth > 0.0) {
        return Err(DepthError::Parameter(format!(
            "max_depth must be positive, got {max_depth}"
        )));
    }
    frame.check_shape()?;
    let k = &frame.intrinsics;
    let w = k.width as usize;
    let positions = frame
        .depth
        .iter()
        .enumerate()
        .filter(|(_, &d)| DepthFrame::is_valid_depth(d, max_depth))
        .map(|(i, &d)| {
            let px = Pixel {
                u: (i % w) as f64,
                v: (i / w) as f64,
            };
            unproject(px, d, k)
        })
        .collect();
    Ok(PointCloud::from_positions(positions))
}

/// Unprojects every frame and moves it into the shared world frame.
pub fn merge_frames(frames: &[DepthFrame], max_depth: f64) -> Result<PointCloud, DepthError> {
    if frames.is_empty() {
        return Err(DepthError::EmptyInput);
    }
    let parts = frames
        .par_iter()
        .map(|f| {
            unproject_depth(f, max_depth).map(|c| {
                c.positions
                    .iter()
                    .map(|p| transform_point(&f.pose, p))
                    .collect::<Vec<_>>()
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointCloud::from_positions(parts.concat()))
}

/// Replaces all points in each occupied voxel by their centroid.
///
/// Output order follows the voxel key order, so it is independent of the
/// input order up to the centroid summation.
pub fn downsample_voxel(cloud: &PointCloud, voxel: f64) -> Result<PointCloud, DepthError> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(DepthError::Parameter(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let Some((lo, _)) = cloud.bounds() else {
        return Ok(PointCloud::default());
    };
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, [f64; 3], usize)> = BTreeMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        let key = (
            ((p.x - lo.x) / voxel).floor() as i64,
            ((p.y - lo.y) / voxel).floor() as i64,
            ((p.z - lo.z) / voxel).floor() as i64,
        );
        let entry = cells.entry(key).or_insert((Vec3::zeros(), [0.0; 3], 0));
        entry.0 += p;
        if let Some(c) = &cloud.colors {
            for k in 0..3 {
                entry.1[k] += c[i][k];
            }
        }
        entry.2 += 1;
    }
    let (lo, hi) = cloud.bounds().unwrap();
    let mut positions = Vec::with_capacity(cells.len());
    let mut colors = Vec::with_capacity(cells.len());
    for (sum, csum, n) in cells.into_values() {
        let n = n as f64;
        // centroid rounding can step a hair outside the bounding box
        positions.push((sum / n).sup(&lo).inf(&hi));
        colors.push([csum[0] / n, csum[1] / n, csum[2] / n]);
    }
    Ok(PointCloud {
        positions,
        colors: cloud.colors.as_ref().map(|_| colors),
    })
}
