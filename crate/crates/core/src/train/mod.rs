//! Optimization of a Gaussian set against posed images.

mod adam;
mod config;
mod densify;
mod loss;
mod trainer;

pub use adam::{AdamState, GaussianAdam, GroupRates, NonFiniteGradient, BETA1, BETA2, EPSILON};
pub use config::TrainConfig;
pub use densify::{
    densify_and_prune, reset_opacity, DensifyOutcome, DensifyParams, DensifyStats, RowOrigin,
    CLONE_EXTENT_FRACTION, PRUNE_EXTENT_FRACTION, PRUNE_SCREEN_RADIUS, SPLIT_CHILDREN, SPLIT_SCALE_DIVISOR,
};
pub use loss::{photometric_loss, photometric_loss_with_grad, LossTerms};
pub use trainer::{
    scene_extent, train, train_indices, train_with_observer, view_psnrs, MetricsLog, MetricsRecord,
    TrainObserver, TrainOutcome, TrainView, METRICS_HEADER, SH_REST_LR_DIVISOR,
};

use thiserror::Error;

use crate::eval::EvalError;
use crate::gaussian::GaussianSet;
use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss {
        iteration: usize,
        last_good: Box<GaussianSet>,
    },
    #[error("non-finite gradient at iteration {iteration}: {detail}")]
    NonFiniteGradient {
        iteration: usize,
        detail: String,
        last_good: Box<GaussianSet>,
    },
    #[error("observer failed: {0}")]
    Observer(String),
}

impl TrainError {
    /// Parameters from before the failing update, for numerical failures.
    pub fn last_good(&self) -> Option<&GaussianSet> {
        match self {
            TrainError::NonFiniteLoss { last_good, .. } | TrainError::NonFiniteGradient { last_good, .. } => {
                Some(last_good)
            }
            _ => None,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.last_good().is_some()
    }
}
