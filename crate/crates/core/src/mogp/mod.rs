//! Training and prediction for the dependent multi-output model.

mod likelihood;
mod model;
mod optimize;
mod train;

pub use likelihood::{likelihood_and_gradient, likelihood_gradient, log_marginal_likelihood, solve_with_factor};
pub use model::{Prediction, TrainedModel, TrainedModelDocument, TrainingMeta, MODEL_SCHEMA_VERSION};
pub use optimize::{minimize, Lbfgs, LbfgsSettings, StopReason};
pub use train::{
    train, train_independent_baseline, train_shared, AnyModel, IndependentModel, Predictor, TrainConfig,
};

use crate::kernels::KernelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MogpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("all {restarts} restarts failed at their initial point")]
    AllRestartsFailed { restarts: usize },
    #[error("model json: {0}")]
    Json(String),
    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("{0}")]
    Io(String),
}
