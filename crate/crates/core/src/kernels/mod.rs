//! Convolved squared-exponential covariance for dependent outputs.

mod covariance;
mod hyper;

pub use covariance::{
    assemble_full_covariance, assemble_noise_free, block_offsets, check_inputs, covariance_block,
    cross_covariance, factorize, factorize_covariance, query_covariance, smoothing_kernel,
    unit_block, CovarianceFactor, JITTER_SCALE, MAX_JITTER_ESCALATIONS,
};
pub use hyper::{
    Hyperparameters, HyperparametersDocument, PrivateDocument, PrivateKernels,
    HYPERPARAMETER_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("covariance is not positive definite after {level} jitter escalations")]
    NotPositiveDefinite { level: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("unsupported hyperparameter schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("hyperparameter json: {0}")]
    Json(String),
}
