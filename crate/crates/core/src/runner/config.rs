use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::simulate::FreeRunOptions;
use super::RunnerError;
use crate::mogp::TrainConfig;
use crate::plant::{ExcitationConfig, Plant, PlantCoefficients, SimulationSettings};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Every knob of the pipeline in one TOML document. Missing sections and
/// keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root seed; every experiment and sweep duration derives its own.
    pub seed: u64,
    /// Worker threads (`None`: `MOGP_THREADS` or one per core).
    pub threads: Option<usize>,
    pub plant: PlantConfig,
    pub excitation: ExcitationConfig,
    pub narx: NarxConfig,
    pub training: TrainConfig,
    pub protocol: ProtocolConfig,
    pub sensitivity: SensitivityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            threads: None,
            plant: PlantConfig::default(),
            excitation: ExcitationConfig::default(),
            narx: NarxConfig::default(),
            training: TrainConfig::default(),
            protocol: ProtocolConfig::default(),
            sensitivity: SensitivityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    /// Coefficient file; the bundled set when absent.
    pub coefficients: Option<PathBuf>,
    /// Length of each protocol experiment, s.
    pub duration: f64,
    pub sample_dt: f64,
    pub simulation: SimulationSettings,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            coefficients: None,
            duration: 2000.0,
            sample_dt: 1.5,
            simulation: SimulationSettings::default(),
        }
    }
}

impl PlantConfig {
    pub fn build_plant(&self) -> Result<Plant, RunnerError> {
        let coeffs = match &self.coefficients {
            Some(path) => PlantCoefficients::load(path)?,
            None => PlantCoefficients::default(),
        };
        Ok(Plant::new(coeffs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NarxConfig {
    pub lag: usize,
    /// Training rows kept after uniform-stride subsampling.
    pub n_max: usize,
    /// Train/validation boundary of the protocol experiments, s.
    pub boundary: f64,
}

impl Default for NarxConfig {
    fn default() -> Self {
        Self {
            lag: 3,
            n_max: 300,
            boundary: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Experiment numbers to run, 1 to 8.
    pub experiments: Vec<u32>,
    /// First free-run sample (`None`: the lag order, i.e. the log start).
    pub free_run_start: Option<usize>,
    pub free_run: FreeRunOptions,
    /// Write per-step trajectory CSVs.
    pub trajectories: bool,
    /// Write SVG panels of the trajectories.
    pub plots: bool,
    /// Write wall-clock runtimes to `timings.json`. Off by default because
    /// runtimes differ between otherwise identical runs.
    pub write_timings: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            experiments: (1..=8).collect(),
            free_run_start: None,
            free_run: FreeRunOptions::default(),
            trajectories: true,
            plots: true,
            write_timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    /// Run lengths, s; the first half of each is used for training.
    pub durations: Vec<f64>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            durations: vec![500.0, 1000.0, 1500.0, 2000.0, 4000.0],
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunnerError> {
        let cfg: Self = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let p = &self.plant;
        if !(p.duration > 0.0 && p.duration.is_finite()) {
            return bad(format!("plant.duration must be positive, got {}", p.duration));
        }
        if !(p.sample_dt > 0.0 && p.sample_dt.is_finite()) {
            return bad(format!("plant.sample_dt must be positive, got {}", p.sample_dt));
        }
        if self.narx.lag == 0 {
            return bad("narx.lag must be at least 1".into());
        }
        if self.narx.n_max == 0 {
            return bad("narx.n_max must be at least 1".into());
        }
        if !(self.narx.boundary > 0.0 && self.narx.boundary < p.duration) {
            return bad(format!(
                "narx.boundary {} must lie strictly inside (0, {})",
                self.narx.boundary, p.duration
            ));
        }
        let t = &self.training;
        if t.latents == 0 || t.restarts == 0 {
            return bad("training.latents and training.restarts must be at least 1".into());
        }
        if !(t.optimizer.lower < t.optimizer.upper) || t.min_noise_log_variance > t.optimizer.upper {
            return bad("training optimizer bounds are empty".into());
        }
        if let Some(e) = self.protocol.experiments.iter().find(|e| !(1..=8).contains(*e)) {
            return bad(format!("unknown experiment {e} (expected 1 to 8)"));
        }
        if !(self.protocol.free_run.divergence_limit > 0.0) {
            return bad("protocol.free_run.divergence_limit must be positive".into());
        }
        let d = &self.sensitivity.durations;
        if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) || d.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sensitivity.durations must be positive and strictly increasing".into());
        }
        Ok(())
    }

    /// Seed of a protocol experiment or sweep entry identified by `tag`.
    pub fn derived_seed(&self, tag: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03))
    }
}
