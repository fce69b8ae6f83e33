use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::{ControlInput, InputLimits, Plant, PlantError, PlantState, SignalSpec};

pub const CSV_HEADER: &str = "t,n,delta_rudder,delta_elevator,u,v,w,p,q,r";
pub const OUTPUT_NAMES: [&str; 6] = ["u", "v", "w", "p", "q", "r"];
pub const INPUT_NAMES: [&str; 3] = ["n", "delta_rudder", "delta_elevator"];

/// The eight excitation configurations: a chirp on the selected channels for
/// the first segment, followed by a ramp or a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    ChirpRampPropeller,
    ChirpRampRudder,
    ChirpRampStern,
    ChirpRampAll,
    ChirpStepPropeller,
    ChirpStepRudder,
    ChirpStepStern,
    ChirpStepAll,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::ChirpRampPropeller,
        Experiment::ChirpRampRudder,
        Experiment::ChirpRampStern,
        Experiment::ChirpRampAll,
        Experiment::ChirpStepPropeller,
        Experiment::ChirpStepRudder,
        Experiment::ChirpStepStern,
        Experiment::ChirpStepAll,
    ];

    pub fn from_number(n: u32) -> Result<Self, PlantError> {
        match n {
            1..=8 => Ok(Self::ALL[n as usize - 1]),
            _ => Err(PlantError::UnknownExperiment(n)),
        }
    }

    pub fn number(self) -> u32 {
        Self::ALL.iter().position(|e| *e == self).unwrap() as u32 + 1
    }

    /// Excited channels, indexed as `[propeller, rudder, elevator]`.
    pub fn channels(self) -> &'static [usize] {
        use Experiment::*;
        match self {
            ChirpRampPropeller | ChirpStepPropeller => &[0],
            ChirpRampRudder | ChirpStepRudder => &[1],
            ChirpRampStern | ChirpStepStern => &[2],
            ChirpRampAll | ChirpStepAll => &[0, 1, 2],
        }
    }

    pub fn uses_step(self) -> bool {
        self.number() > 4
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let target = match self.channels() {
            [0] => "Propeller",
            [1] => "Rudder",
            [2] => "Stern",
            _ => "All surfaces",
        };
        let second = if self.uses_step() { "Step" } else { "Ramp" };
        write!(f, "Chirp+{second} in {target}")
    }
}

/// Per-channel excitation parameters, channels ordered
/// `[propeller (rev/s), rudder (rad), elevator (rad)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationConfig {
    /// Command held on channels that are not excited, and the offset the
    /// excitation is added to.
    pub trim: [f64; 3],
    pub chirp_amplitude: [f64; 3],
    /// `[f0, f1]` in Hz per channel.
    pub chirp_band: [[f64; 2]; 3],
    /// End of the chirp segment, s.
    pub switch_time: f64,
    /// Saturation level of the ramp and level of the step.
    pub hold_level: [f64; 3],
    pub ramp_rate: [f64; 3],
    /// Delay of the step after `switch_time`, s.
    pub step_delay: f64,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            trim: [25.0, 0.0, 0.0],
            chirp_amplitude: [5.0, 0.12, 0.08],
            chirp_band: [[0.005, 0.05], [0.05, 0.005], [0.01, 0.04]],
            switch_time: 1000.0,
            hold_level: [3.75, 0.09, 0.06],
            ramp_rate: [0.025, 0.0006, 0.0004],
            step_delay: 100.0,
        }
    }
}

/// Time-varying command for the three input channels: a trim value plus the
/// first segment that covers `t` (zero when none does).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSchedule {
    pub base: [f64; 3],
    pub segments: [Vec<SignalSpec>; 3],
}

impl InputSchedule {
    pub fn constant(base: [f64; 3]) -> Self {
        Self {
            base,
            segments: Default::default(),
        }
    }

    /// The configuration of one of the eight numbered experiments.
    pub fn for_experiment(exp: Experiment, cfg: &ExcitationConfig, duration: f64) -> Self {
        let mut schedule = Self::constant(cfg.trim);
        let switch = cfg.switch_time;
        for &ch in exp.channels() {
            let [f0, f1] = cfg.chirp_band[ch];
            let chirp = SignalSpec::chirp(cfg.chirp_amplitude[ch], f0, f1, 0.0, switch);
            let second = if exp.uses_step() {
                SignalSpec::step(
                    cfg.hold_level[ch],
                    switch + cfg.step_delay,
                    switch,
                    duration.max(switch + 1.0),
                )
            } else {
                SignalSpec::ramp(
                    cfg.hold_level[ch],
                    cfg.ramp_rate[ch],
                    switch,
                    duration.max(switch + 1.0),
                )
            };
            schedule.segments[ch] = vec![chirp, second];
        }
        schedule
    }

    /// Chirp on every channel for the first half, ramp for the second half.
    /// The chirp band is swept over the half-duration.
    pub fn chirp_ramp_all(cfg: &ExcitationConfig, duration: f64) -> Self {
        let half = 0.5 * duration;
        let mut schedule = Self::constant(cfg.trim);
        for ch in 0..3 {
            let [f0, f1] = cfg.chirp_band[ch];
            schedule.segments[ch] = vec![
                SignalSpec::chirp(cfg.chirp_amplitude[ch], f0, f1, 0.0, half),
                SignalSpec::ramp(cfg.hold_level[ch], cfg.ramp_rate[ch], half, duration),
            ];
        }
        schedule
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !self.base.iter().all(|v| v.is_finite()) {
            return Err(PlantError::InvalidSignal("non-finite trim".into()));
        }
        self.segments.iter().flatten().try_for_each(|s| s.validate())
    }

    pub fn at(&self, t: f64) -> ControlInput {
        let mut c = self.base;
        for (ch, segs) in self.segments.iter().enumerate() {
            if let Some(seg) = segs.iter().find(|s| s.contains(t)) {
                // contains() was just checked
                c[ch] += seg.generate_signal(t).unwrap_or(0.0);
            }
        }
        ControlInput::from_array(c)
    }
}

/// Integrator and sampling settings for a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    /// RK4 step, s.
    pub integrator_dt: f64,
    /// Initial surge speed for the straight-and-level start, m/s.
    pub initial_surge: f64,
    pub limits: InputLimits,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            integrator_dt: 0.05,
            initial_surge: 1.5,
            limits: InputLimits::default(),
        }
    }
}

/// Sampled record of a simulated run: time, applied commands and body-frame
/// velocities, one row per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub t: Vec<f64>,
    pub inputs: Vec<[f64; 3]>,
    pub outputs: Vec<[f64; 6]>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, t: f64, input: [f64; 3], output: [f64; 6]) {
        self.t.push(t);
        self.inputs.push(input);
        self.outputs.push(output);
    }

    /// All nine channels of row `i`: six outputs followed by three inputs.
    pub fn channels(&self, i: usize) -> [f64; 9] {
        let mut c = [0.0; 9];
        c[..6].copy_from_slice(&self.outputs[i]);
        c[6..].copy_from_slice(&self.inputs[i]);
        c
    }

    pub fn output_channel(&self, ch: usize) -> Vec<f64> {
        self.outputs.iter().map(|o| o[ch]).collect()
    }

    pub fn input_channel(&self, ch: usize) -> Vec<f64> {
        self.inputs.iter().map(|o| o[ch]).collect()
    }

    pub fn within_caps(&self, caps: &super::VelocityCaps) -> bool {
        self.outputs
            .iter()
            .all(|o| caps.admits(&Vector6::from_column_slice(o)))
    }

    /// `(min, max)` per channel, outputs first.
    pub fn channel_ranges(&self) -> [(f64, f64); 9] {
        let mut r = [(f64::INFINITY, f64::NEG_INFINITY); 9];
        for i in 0..self.len() {
            for (slot, v) in r.iter_mut().zip(self.channels(i)) {
                slot.0 = slot.0.min(v);
                slot.1 = slot.1.max(v);
            }
        }
        r
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            write!(w, "{:.16e}", self.t[i])?;
            for v in self.inputs[i].iter().chain(self.outputs[i].iter()) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, PlantError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| PlantError::Csv("empty file".into()))?
            .map_err(|e| PlantError::Csv(e.to_string()))?;
        if header.trim() != CSV_HEADER {
            return Err(PlantError::Csv(format!("unexpected header `{}`", header.trim())));
        }
        let mut log = TrajectoryLog::default();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| PlantError::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PlantError::Csv(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 10 {
                return Err(PlantError::Csv(format!(
                    "line {}: expected 10 fields, found {}",
                    lineno + 2,
                    vals.len()
                )));
            }
            log.push(
                vals[0],
                [vals[1], vals[2], vals[3]],
                [vals[4], vals[5], vals[6], vals[7], vals[8], vals[9]],
            );
        }
        Ok(log)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, PlantError> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| PlantError::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Number of samples for a run of `duration` seconds sampled every `sample_dt`.
pub fn sample_count(duration: f64, sample_dt: f64) -> usize {
    (duration / sample_dt + 1e-9).floor() as usize + 1
}

/// Simulate `schedule` for `duration` seconds from a straight-and-level
/// cruise, logging every `sample_dt` seconds.
///
/// Commands are sampled at the log instants and held until the next sample,
/// so the logged input at row `k` is exactly what drives the plant over
/// `[t_k, t_{k+1})`.
pub fn run_experiment(
    plant: &Plant,
    schedule: &InputSchedule,
    settings: &SimulationSettings,
    duration: f64,
    sample_dt: f64,
) -> Result<TrajectoryLog, PlantError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(PlantError::InvalidSampling(format!("duration must be positive, got {duration}")));
    }
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(PlantError::InvalidSampling(format!("sample_dt must be positive, got {sample_dt}")));
    }
    let dt = settings.integrator_dt;
    if !(dt > 0.0) {
        return Err(PlantError::InvalidStep(dt));
    }
    let ratio = sample_dt / dt;
    let substeps = ratio.round();
    if substeps < 1.0 || (ratio - substeps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(PlantError::InvalidSampling(format!(
            "sample_dt {sample_dt} is not an integer multiple of the integrator step {dt}"
        )));
    }
    let substeps = substeps as usize;
    schedule.validate()?;

    let n = sample_count(duration, sample_dt);
    let mut log = TrajectoryLog {
        t: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
    };
    let mut state = PlantState::cruise(settings.initial_surge);
    for k in 0..n {
        let t = k as f64 * sample_dt;
        let input = schedule.at(t).clamped(&settings.limits);
        let mut out = [0.0; 6];
        out.copy_from_slice(state.nu.as_slice());
        log.push(t, input.to_array(), out);
        if k + 1 < n {
            for _ in 0..substeps {
                state = plant.step(&state, &input, dt)?;
            }
        }
    }
    Ok(log)
}
