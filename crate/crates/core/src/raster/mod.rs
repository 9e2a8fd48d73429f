//! Differentiable splatting of a [`GaussianSet`](crate::gaussian::GaussianSet).
//!
//! Forward: EWA projection of every Gaussian, one global front-to-back depth
//! sort (ties by Gaussian index), 16×16 tile binning and per-pixel
//! alpha compositing. Backward: exact analytic gradients of the composited
//! image w.r.t. every Gaussian parameter.
//!
//! A splat contributes to a pixel only inside its 3σ ellipse, so the result
//! does not depend on the tiling. Work is parallel over tiles and every
//! reduction runs in tile order, which keeps results bit-identical across
//! thread counts.

mod backward;
mod forward;
mod project;

pub use backward::{render_backward, Gradients};
pub use forward::{render, Contribution, RenderAux, RenderOutput};
pub use project::{project_gaussian, Splat2D};

use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, Vec3};

/// Added to the diagonal of every screen-space covariance (px²).
pub const COV2D_DILATION: f64 = 0.3;
pub const DET_FLOOR: f64 = 1e-12;
pub const ALPHA_MAX: f64 = 0.99;
/// Compositing stops once transmittance would drop below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
pub const NEAR_PLANE: f64 = 0.01;
pub const TILE_SIZE: usize = 16;
/// Squared Mahalanobis radius of the splat footprint (3σ).
pub const FOOTPRINT_SIGMA2: f64 = 9.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("auxiliary data does not match this forward pass: {0}")]
    StaleAux(String),
    #[error("upstream gradient has shape {got:?}, expected {expected:?}")]
    GradShape {
        got: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
}

/// Posed pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    world_to_cam: Matrix3<f64>,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        Self {
            intrinsics,
            pose,
            world_to_cam: pose.rotation_matrix().transpose(),
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    /// Rotation part of the world-to-camera transform.
    pub fn world_to_cam_rotation(&self) -> &Matrix3<f64> {
        &self.world_to_cam
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.world_to_cam * (p - self.pose.translation)
    }
}
