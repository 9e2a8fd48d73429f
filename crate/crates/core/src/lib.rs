//! Depth-initialized 3D Gaussian splatting.
//!
//! The pipeline: depth frames are fused into a world-frame point cloud
//! ([`depth`]), which seeds a set of isotropic Gaussians ([`gaussian`]).
//! The Gaussians are optimized against posed RGB images through a
//! differentiable rasterizer ([`raster`], [`train`]), and their centers are
//! extracted as a densified point cloud that can be scored against a
//! reference ([`eval`]). [`io`] covers datasets, PLY, COLMAP text models and
//! synthetic scenes.

pub mod cloud;
pub mod depth;
pub mod eval;
pub mod gaussian;
pub mod geometry;
pub mod image;
pub mod io;
pub mod raster;
pub mod sh;
pub mod spatial;
pub mod train;
