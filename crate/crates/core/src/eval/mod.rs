//! Image and point-cloud quality metrics.

mod chamfer;
mod image_metrics;

pub use chamfer::{chamfer, distance_colored_cloud, viridis, ChamferReport, ChamferResult};
pub use image_metrics::{psnr, ssim, ssim_with_grad, SSIM_SIGMA, SSIM_WINDOW};

use thiserror::Error;

use crate::image::ImageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("{0} point cloud is empty")]
    EmptyCloud(&'static str),
    #[error("{0}")]
    Parameter(String),
}
