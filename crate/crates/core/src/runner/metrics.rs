use serde::{Deserialize, Serialize};

use crate::narx::N_OUTPUTS;

/// Error statistics of one residual series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Sum of squared residuals.
    pub press: f64,
    pub count: usize,
}

impl ChannelMetrics {
    pub fn from_residuals(residuals: impl IntoIterator<Item = f64>) -> Self {
        let (mut press, mut abs, mut count) = (0.0, 0.0, 0usize);
        for e in residuals {
            press += e * e;
            abs += e.abs();
            count += 1;
        }
        if count == 0 {
            return Self {
                rmse: 0.0,
                mae: 0.0,
                press: 0.0,
                count: 0,
            };
        }
        Self {
            rmse: (press / count as f64).sqrt(),
            mae: abs / count as f64,
            press,
            count,
        }
    }
}

/// Channel means of the three metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub press: f64,
}

impl AggregateMetrics {
    pub fn of(channels: &[ChannelMetrics]) -> Self {
        let n = channels.len().max(1) as f64;
        Self {
            rmse: channels.iter().map(|c| c.rmse).sum::<f64>() / n,
            mae: channels.iter().map(|c| c.mae).sum::<f64>() / n,
            press: channels.iter().map(|c| c.press).sum::<f64>() / n,
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rmse => self.rmse,
            Metric::Mae => self.mae,
            Metric::Press => self.press,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Mae,
    Press,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmse, Metric::Mae, Metric::Press];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::Press => "press",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Mogp,
    Independent,
}

impl ModelId {
    pub const ALL: [ModelId; 2] = [ModelId::Mogp, ModelId::Independent];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Mogp => "mogp",
            ModelId::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    OneStep,
    FreeRun,
}

impl Horizon {
    pub const ALL: [Horizon; 2] = [Horizon::OneStep, Horizon::FreeRun];

    pub fn name(self) -> &'static str {
        match self {
            Horizon::OneStep => "one_step",
            Horizon::FreeRun => "free_run",
        }
    }
}

/// Metrics of one model on one horizon, in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: Horizon,
    pub channels: Vec<ChannelMetrics>,
    pub aggregate: AggregateMetrics,
    /// Fraction of residuals inside the two-sigma band, over all channels.
    pub coverage: Option<f64>,
}

impl MetricsReport {
    /// Build from per-step residuals and, optionally, per-step predictive
    /// standard deviations.
    pub fn from_residuals(horizon: Horizon, residuals: &[[f64; N_OUTPUTS]], std_dev: Option<&[[f64; N_OUTPUTS]]>) -> Self {
        let channels: Vec<ChannelMetrics> = (0..N_OUTPUTS)
            .map(|q| ChannelMetrics::from_residuals(residuals.iter().map(|e| e[q])))
            .collect();
        let coverage = std_dev.filter(|_| !residuals.is_empty()).map(|sd| {
            let inside = residuals
                .iter()
                .zip(sd)
                .flat_map(|(e, s)| (0..N_OUTPUTS).map(move |q| e[q].abs() <= 2.0 * s[q]))
                .filter(|&b| b)
                .count();
            inside as f64 / (residuals.len() * N_OUTPUTS) as f64
        });
        Self {
            horizon,
            aggregate: AggregateMetrics::of(&channels),
            channels,
            coverage,
        }
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; zero for a
/// single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
