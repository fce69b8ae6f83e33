//! Six-degree-of-freedom vehicle model, excitation signals and experiment
//! generation.

mod coefficients;
mod dynamics;
mod experiment;
mod signal;
mod state;

pub use coefficients::PlantCoefficients;
pub use dynamics::{euler_rate_transform, kinematics, rotation_matrix, Plant, GIMBAL_MARGIN};
pub use experiment::{
    run_experiment, sample_count, ExcitationConfig, Experiment, InputSchedule, SimulationSettings,
    TrajectoryLog, CSV_HEADER, INPUT_NAMES, OUTPUT_NAMES,
};
pub use signal::{SignalKind, SignalSpec};
pub use state::{ControlInput, InputLimits, PlantState, VelocityCaps};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("non-finite value in vehicle state or dynamics")]
    NonFiniteState,
    #[error("pitch {pitch} rad is at the Euler-angle singularity")]
    GimbalLock { pitch: f64 },
    #[error("integration step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("t = {t} is outside the signal window [{start}, {end}]")]
    OutOfWindow { t: f64, start: f64, end: f64 },
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid sampling: {0}")]
    InvalidSampling(String),
    #[error("unknown experiment {0} (expected 1 to 8)")]
    UnknownExperiment(u32),
    #[error("trajectory csv: {0}")]
    Csv(String),
}
