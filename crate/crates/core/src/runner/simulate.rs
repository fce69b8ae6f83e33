use faer::Mat;
use serde::{Deserialize, Serialize};

use super::metrics::{Horizon, MetricsReport};
use super::RunnerError;
use crate::mogp::{Prediction, Predictor};
use crate::narx::{regressor_from_history, NormalizationMap, RegressionDataset, N_CHANNELS, N_OUTPUTS};
use crate::plant::TrajectoryLog;

/// Standard deviation of a noisy observation of output `q`.
pub fn observation_std(model: &dyn Predictor, p: &Prediction, q: usize) -> f64 {
    (p.variance[q] + model.noise_variance(q)).sqrt()
}

fn observation_stds(model: &dyn Predictor, p: &Prediction) -> [f64; N_OUTPUTS] {
    std::array::from_fn(|q| observation_std(model, p, q))
}

fn model_norm<'a>(model: &'a dyn Predictor) -> Result<&'a NormalizationMap, RunnerError> {
    model.normalization().ok_or(RunnerError::MissingNormalization)
}

fn model_lag(model: &dyn Predictor) -> Result<usize, RunnerError> {
    let d = model.dim();
    if d == 0 || d % N_CHANNELS != 0 || model.outputs() != N_OUTPUTS {
        return Err(RunnerError::ModelShape {
            outputs: model.outputs(),
            dim: d,
        });
    }
    Ok(d / N_CHANNELS)
}

/// Teacher-forced validation: every row is predicted from its true lagged
/// history.
pub fn one_step_validate(
    model: &dyn Predictor,
    validation: &RegressionDataset,
) -> Result<(MetricsReport, Vec<Prediction>), RunnerError> {
    if model_norm(model)? != &validation.norm {
        return Err(RunnerError::NormalizationMismatch);
    }
    if model_lag(model)? != validation.lag {
        return Err(RunnerError::ModelShape {
            outputs: model.outputs(),
            dim: model.dim(),
        });
    }
    let preds = model.predict_batch(validation.x.as_ref());
    let residuals: Vec<[f64; N_OUTPUTS]> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| std::array::from_fn(|q| validation.y[(i, q)] - p.mean[q]))
        .collect();
    let sd: Vec<[f64; N_OUTPUTS]> = preds.iter().map(|p| observation_stds(model, p)).collect();
    Ok((MetricsReport::from_residuals(Horizon::OneStep, &residuals, Some(&sd)), preds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreeRunOptions {
    /// Feed true outputs back instead of predictions.
    pub teacher_forcing: bool,
    /// Abort once any normalized prediction leaves `[-limit, limit]`.
    pub divergence_limit: f64,
    /// Record which samples fill the output lags at every step.
    pub trace: bool,
}

impl Default for FreeRunOptions {
    fn default() -> Self {
        Self {
            teacher_forcing: false,
            divergence_limit: 10.0,
            trace: false,
        }
    }
}

/// Where the output lags of one step came from: `(log index, predicted)` for
/// lags `1..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagTrace {
    pub index: usize,
    pub sources: Vec<(usize, bool)>,
}

/// Closed-loop rollout in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeRun {
    /// Log index of every predicted step.
    pub t_index: Vec<usize>,
    pub truth: Vec<[f64; N_OUTPUTS]>,
    pub mean: Vec<[f64; N_OUTPUTS]>,
    /// Observation standard deviation of each step (not propagated).
    pub std_dev: Vec<[f64; N_OUTPUTS]>,
    pub report: MetricsReport,
    pub trace: Vec<LagTrace>,
}

/// Roll the model forward from `start`, feeding predicted outputs back into
/// the lag buffer and taking commands from `log`.
pub fn free_run_simulate(
    model: &dyn Predictor,
    log: &TrajectoryLog,
    start: usize,
    options: &FreeRunOptions,
) -> Result<FreeRun, RunnerError> {
    let norm = model_norm(model)?;
    let lag = model_lag(model)?;
    if start < lag || start >= log.len() {
        return Err(RunnerError::InvalidStart {
            start,
            lag,
            len: log.len(),
        });
    }
    let truth_all: Vec<[f64; N_CHANNELS]> = (0..log.len()).map(|i| norm.normalize_row(&log.channels(i))).collect();
    let mut buffer = truth_all.clone();
    let mut predicted = vec![false; log.len()];
    let steps = log.len() - start;
    let mut run = FreeRun {
        t_index: Vec::with_capacity(steps),
        truth: Vec::with_capacity(steps),
        mean: Vec::with_capacity(steps),
        std_dev: Vec::with_capacity(steps),
        report: MetricsReport::from_residuals(Horizon::FreeRun, &[], None),
        trace: Vec::new(),
    };
    let dim = lag * N_CHANNELS;
    let mut row = Mat::<f64>::zeros(1, dim);
    let mut regressors = Mat::<f64>::zeros(steps, dim);
    for k in start..log.len() {
        let x = regressor_from_history(lag, |j| buffer[k - j]);
        for (c, v) in x.into_iter().enumerate() {
            row[(0, c)] = v;
            regressors[(k - start, c)] = v;
        }
        if options.trace {
            run.trace.push(LagTrace {
                index: k,
                sources: (1..=lag).map(|j| (k - j, predicted[k - j])).collect(),
            });
        }
        let p = model.predict_mean_batch(row.as_ref()).pop().expect("one row");
        if let Some(q) = (0..N_OUTPUTS).find(|&q| !(p[q].abs() <= options.divergence_limit)) {
            return Err(RunnerError::DivergenceDetected {
                index: k,
                steps: k - start,
                value: p[q],
            });
        }
        let mean: [f64; N_OUTPUTS] = std::array::from_fn(|q| p[q]);
        if !options.teacher_forcing {
            buffer[k][..N_OUTPUTS].copy_from_slice(&mean);
            predicted[k] = true;
        }
        run.t_index.push(k);
        run.truth.push(std::array::from_fn(|q| truth_all[k][q]));
        run.mean.push(mean);
    }
    // Variances do not feed back, so they are evaluated in one batch.
    run.std_dev = model
        .predict_batch(regressors.as_ref())
        .iter()
        .map(|p| observation_stds(model, p))
        .collect();
    let residuals: Vec<[f64; N_OUTPUTS]> = run
        .truth
        .iter()
        .zip(&run.mean)
        .map(|(t, m)| std::array::from_fn(|q| t[q] - m[q]))
        .collect();
    run.report = MetricsReport::from_residuals(Horizon::FreeRun, &residuals, Some(&run.std_dev));
    Ok(run)
}
