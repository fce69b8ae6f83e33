//! The identification protocol: data generation, training, validation,
//! closed-loop simulation, metrics and report bundles.

mod bundle;
mod config;
mod metrics;
mod plot;
mod protocol;
mod simulate;

pub use bundle::{trajectory_csv, write_protocol_bundle, write_sensitivity_bundle, BundleFiles};
pub use config::{
    NarxConfig, PlantConfig, ProtocolConfig, RunConfig, SensitivityConfig, CONFIG_SCHEMA_VERSION,
};
pub use plot::{panel_svg, PanelData};
pub use protocol::{
    identify, prepare, run_protocol, sensitivity_sweep, ExperimentResult, ExperimentRun, ModelRun, PreparedData,
    ProtocolReport, SensitivityResult, SensitivityRow, Series, TableRow, TrainingSummary,
};

pub use metrics::{mean_and_std, AggregateMetrics, ChannelMetrics, Horizon, Metric, MetricsReport, ModelId};
pub use simulate::{
    free_run_simulate, observation_std, one_step_validate, FreeRun, FreeRunOptions, LagTrace,
};

use crate::mogp::MogpError;
use crate::narx::NarxError;
use crate::plant::PlantError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Narx(#[from] NarxError),
    #[error(transparent)]
    Mogp(#[from] MogpError),
    #[error("dataset and model use different normalization maps")]
    NormalizationMismatch,
    #[error("model carries no normalization map")]
    MissingNormalization,
    #[error("model with {outputs} outputs and {dim} regressors does not fit the lag layout")]
    ModelShape { outputs: usize, dim: usize },
    #[error("free run cannot start at {start} with lag {lag} on a log of {len} samples")]
    InvalidStart { start: usize, lag: usize, len: usize },
    #[error("free run diverged at sample {index} after {steps} steps (value {value:e})")]
    DivergenceDetected { index: usize, steps: usize, value: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}
