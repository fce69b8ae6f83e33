use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::PlantError;

/// Waveform family of an excitation segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    /// Linear frequency sweep from `f0` to `f1` Hz across the window.
    Chirp { f0: f64, f1: f64 },
    /// Zero until `step_time`, then `amplitude`.
    Step { step_time: f64 },
    /// `ramp_rate * (t - start_time)`, saturated at `±|amplitude|`.
    Ramp { ramp_rate: f64 },
    Constant,
}

/// One excitation segment on a single input channel, active on
/// `[start_time, end_time]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(flatten)]
    pub kind: SignalKind,
    pub amplitude: f64,
    pub start_time: f64,
    pub end_time: f64,
}

impl SignalSpec {
    pub fn chirp(amplitude: f64, f0: f64, f1: f64, start_time: f64, end_time: f64) -> Self {
        Self {
            kind: SignalKind::Chirp { f0, f1 },
            amplitude,
            start_time,
            end_time,
        }
    }

    pub fn step(amplitude: f64, step_time: f64, start_time: f64, end_time: f64) -> Self {
        Self {
            kind: SignalKind::Step { step_time },
            amplitude,
            start_time,
            end_time,
        }
    }

    pub fn ramp(amplitude: f64, ramp_rate: f64, start_time: f64, end_time: f64) -> Self {
        Self {
            kind: SignalKind::Ramp { ramp_rate },
            amplitude,
            start_time,
            end_time,
        }
    }

    pub fn constant(amplitude: f64, start_time: f64, end_time: f64) -> Self {
        Self {
            kind: SignalKind::Constant,
            amplitude,
            start_time,
            end_time,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let finite = [self.amplitude, self.start_time, self.end_time]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.end_time > self.start_time) {
            return Err(PlantError::InvalidSignal(format!(
                "window [{}, {}] is empty or non-finite",
                self.start_time, self.end_time
            )));
        }
        if let SignalKind::Chirp { f0, f1 } = self.kind {
            if !(f0 > 0.0 && f1 > 0.0) {
                return Err(PlantError::InvalidSignal(format!(
                    "chirp frequencies must be positive (f0 = {f0}, f1 = {f1})"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_time && t <= self.end_time
    }

    /// Signal value at absolute time `t`.
    pub fn generate_signal(&self, t: f64) -> Result<f64, PlantError> {
        if !self.contains(t) {
            return Err(PlantError::OutOfWindow {
                t,
                start: self.start_time,
                end: self.end_time,
            });
        }
        let tau = t - self.start_time;
        let value = match self.kind {
            SignalKind::Chirp { f0, f1 } => {
                let span = self.end_time - self.start_time;
                let phase = f0 * tau + (f1 - f0) * tau * tau / (2.0 * span);
                self.amplitude * (2.0 * PI * phase).sin()
            }
            SignalKind::Step { step_time } => {
                if t < step_time {
                    0.0
                } else {
                    self.amplitude
                }
            }
            SignalKind::Ramp { ramp_rate } => {
                let cap = self.amplitude.abs();
                (ramp_rate * tau).clamp(-cap, cap)
            }
            SignalKind::Constant => self.amplitude,
        };
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chirp_starts_at_zero() {
        let s = SignalSpec::chirp(2.0, 0.005, 0.05, 0.0, 1000.0);
        assert_eq!(s.generate_signal(0.0).unwrap(), 0.0);
    }

    #[test]
    fn step_switches_at_step_time() {
        let s = SignalSpec::step(0.3, 1000.0, 0.0, 2000.0);
        assert_eq!(s.generate_signal(999.9).unwrap(), 0.0);
        assert_eq!(s.generate_signal(1000.1).unwrap(), 0.3);
    }

    #[test]
    fn ramp_is_clamped() {
        let s = SignalSpec::ramp(0.4, 0.01, 100.0, 500.0);
        assert_eq!(s.generate_signal(150.0).unwrap(), 0.4);
        assert!((s.generate_signal(120.0).unwrap() - 0.2).abs() < 1e-15);
        let down = SignalSpec::ramp(0.4, -0.01, 100.0, 500.0);
        assert_eq!(down.generate_signal(150.0).unwrap(), -0.4);
    }

    #[test]
    fn constant_is_amplitude() {
        let s = SignalSpec::constant(25.0, 0.0, 10.0);
        assert_eq!(s.generate_signal(3.0).unwrap(), 25.0);
    }

    #[test]
    fn outside_window_is_an_error() {
        let s = SignalSpec::constant(1.0, 10.0, 20.0);
        assert!(matches!(
            s.generate_signal(9.0),
            Err(PlantError::OutOfWindow { .. })
        ));
        assert!(s.generate_signal(20.5).is_err());
    }

    #[test]
    fn validation() {
        assert!(SignalSpec::constant(1.0, 5.0, 5.0).validate().is_err());
        assert!(SignalSpec::chirp(1.0, 0.0, 0.1, 0.0, 1.0).validate().is_err());
        assert!(SignalSpec::chirp(1.0, 0.1, 0.01, 0.0, 1.0).validate().is_ok());
    }

    #[test]
    fn chirp_instantaneous_frequency_sweeps() {
        // Count zero crossings in the first and last tenth of the window.
        let s = SignalSpec::chirp(1.0, 0.005, 0.05, 0.0, 1000.0);
        let crossings = |a: f64, b: f64| {
            let mut n = 0;
            let mut prev = s.generate_signal(a).unwrap();
            let mut t = a;
            while t < b {
                t += 0.01;
                let v = s.generate_signal(t.min(b)).unwrap();
                if prev.signum() != v.signum() && v != 0.0 && prev != 0.0 {
                    n += 1;
                }
                prev = v;
            }
            n
        };
        assert!(crossings(900.0, 1000.0) > 3 * crossings(1.0, 100.0));
    }
}
