use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{mean_and_std, AggregateMetrics, Horizon, Metric, MetricsReport, ModelId};
use super::simulate::{free_run_simulate, observation_std, one_step_validate};
use super::RunnerError;
use crate::mogp::{train_independent_baseline, train_shared, Predictor, TrainConfig};
use crate::narx::{build_normalization, embed, split, subsample, NormalizationMap, RegressionDataset, N_OUTPUTS};
use crate::plant::{run_experiment, Experiment, InputSchedule, Plant, TrajectoryLog};

/// A log prepared for identification.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub log: TrajectoryLog,
    pub norm: NormalizationMap,
    /// Subsampled training rows.
    pub train: RegressionDataset,
    pub validation: RegressionDataset,
    /// Training rows before subsampling.
    pub train_rows_available: usize,
}

/// Normalize on the samples up to `boundary`, embed, split and subsample.
pub fn prepare(log: TrajectoryLog, lag: usize, boundary: f64, n_max: usize) -> Result<PreparedData, RunnerError> {
    let norm = build_normalization(&log, Some(boundary))?;
    let ds = embed(&log, lag, &norm)?;
    let (train, validation) = split(&ds, boundary)?;
    let available = train.len();
    Ok(PreparedData {
        train: subsample(&train, n_max),
        validation,
        train_rows_available: available,
        norm,
        log,
    })
}

/// Normalized per-step series of one evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub t: Vec<f64>,
    pub truth: Vec<[f64; N_OUTPUTS]>,
    pub mean: Vec<[f64; N_OUTPUTS]>,
    /// Observation standard deviation.
    pub std_dev: Vec<[f64; N_OUTPUTS]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// Summed over the per-output models of the baseline.
    pub negative_log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Evaluation of one model on one prepared log.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: ModelId,
    pub training: TrainingSummary,
    pub one_step: MetricsReport,
    pub one_step_series: Series,
    pub free_run: Result<(MetricsReport, Series), String>,
}

impl ModelRun {
    pub fn aggregate(&self, horizon: Horizon) -> Option<AggregateMetrics> {
        match horizon {
            Horizon::OneStep => Some(self.one_step.aggregate),
            Horizon::FreeRun => self.free_run.as_ref().ok().map(|(r, _)| r.aggregate),
        }
    }

    pub fn report(&self, horizon: Horizon) -> Option<&MetricsReport> {
        match horizon {
            Horizon::OneStep => Some(&self.one_step),
            Horizon::FreeRun => self.free_run.as_ref().ok().map(|(r, _)| r),
        }
    }
}

fn evaluate(
    model: &dyn Predictor,
    id: ModelId,
    training: TrainingSummary,
    data: &PreparedData,
    cfg: &RunConfig,
) -> Result<ModelRun, RunnerError> {
    let (one_step, preds) = one_step_validate(model, &data.validation)?;
    let one_step_series = Series {
        t: data.validation.t.clone(),
        truth: (0..data.validation.len()).map(|i| data.validation.target(i)).collect(),
        mean: preds.iter().map(|p| std::array::from_fn(|q| p.mean[q])).collect(),
        std_dev: preds
            .iter()
            .map(|p| std::array::from_fn(|q| observation_std(model, p, q)))
            .collect(),
    };
    let start = cfg.protocol.free_run_start.unwrap_or(data.train.lag);
    let free_run = match free_run_simulate(model, &data.log, start, &cfg.protocol.free_run) {
        Ok(run) => {
            let series = Series {
                t: run.t_index.iter().map(|&k| data.log.t[k]).collect(),
                truth: run.truth,
                mean: run.mean,
                std_dev: run.std_dev,
            };
            Ok((run.report, series))
        }
        Err(e @ RunnerError::DivergenceDetected { .. }) => {
            log::warn!("{}: {e}", id.name());
            Err(e.to_string())
        }
        Err(e) => return Err(e),
    };
    Ok(ModelRun {
        model: id,
        training,
        one_step,
        one_step_series,
        free_run,
    })
}

/// Train the multi-output model and the independent baseline on `data` and
/// evaluate both.
pub fn identify(data: &PreparedData, cfg: &RunConfig, seed: u64) -> Result<[ModelRun; 2], RunnerError> {
    let train_cfg = TrainConfig {
        seed,
        ..cfg.training.clone()
    };
    let x = data.train.x.as_ref();
    let y = data.train.y.as_ref();
    let mogp = train_shared(x, y, Some(data.norm.clone()), &train_cfg)?;
    let mogp_summary = TrainingSummary {
        negative_log_likelihood: mogp.meta.negative_log_likelihood,
        iterations: mogp.meta.iterations,
        evaluations: mogp.meta.evaluations,
        wall_time_s: mogp.meta.wall_time_s,
    };
    let baseline = train_independent_baseline(x, y, Some(data.norm.clone()), &train_cfg)?;
    let baseline_summary = TrainingSummary {
        negative_log_likelihood: baseline.models.iter().map(|m| m.meta.negative_log_likelihood).sum(),
        iterations: baseline.models.iter().map(|m| m.meta.iterations).sum(),
        evaluations: baseline.models.iter().map(|m| m.meta.evaluations).sum(),
        wall_time_s: baseline.wall_time_s,
    };
    Ok([
        evaluate(&mogp, ModelId::Mogp, mogp_summary, data, cfg)?,
        evaluate(&baseline, ModelId::Independent, baseline_summary, data, cfg)?,
    ])
}

/// One completed protocol experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub data: PreparedData,
    pub runs: [ModelRun; 2],
}

impl ExperimentRun {
    pub fn run(&self, model: ModelId) -> &ModelRun {
        &self.runs[model as usize]
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub outcome: Result<ExperimentRun, String>,
    pub wall_time_s: f64,
}

fn run_one(plant: &Plant, exp: Experiment, cfg: &RunConfig) -> Result<ExperimentRun, RunnerError> {
    let p = &cfg.plant;
    let schedule = InputSchedule::for_experiment(exp, &cfg.excitation, p.duration);
    let log = run_experiment(plant, &schedule, &p.simulation, p.duration, p.sample_dt)?;
    let data = prepare(log, cfg.narx.lag, cfg.narx.boundary, cfg.narx.n_max)?;
    log::info!(
        "experiment {exp}: {} training rows ({} available), {} validation rows",
        data.train.len(),
        data.train_rows_available,
        data.validation.len()
    );
    let runs = identify(&data, cfg, cfg.derived_seed(u64::from(exp.number())))?;
    Ok(ExperimentRun { data, runs })
}

/// Every configured experiment, in configuration order.
#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub config: RunConfig,
    pub experiments: Vec<ExperimentResult>,
    pub wall_time_s: f64,
}

/// One row of a metric table; `None` where a value is unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub name: String,
    pub values: [Option<f64>; 2],
}

/// Run the numbered experiments. Failures are isolated per experiment.
pub fn run_protocol(cfg: &RunConfig) -> Result<ProtocolReport, RunnerError> {
    cfg.validate()?;
    let started = Instant::now();
    let plant = cfg.plant.build_plant()?;
    let experiments = cfg
        .protocol
        .experiments
        .iter()
        .map(|&n| Experiment::from_number(n))
        .collect::<Result<Vec<_>, _>>()?;
    let results = experiments
        .par_iter()
        .map(|&exp| {
            let t0 = Instant::now();
            let outcome = run_one(&plant, exp, cfg).map_err(|e| {
                log::error!("experiment {exp} failed: {e}");
                e.to_string()
            });
            ExperimentResult {
                experiment: exp,
                outcome,
                wall_time_s: t0.elapsed().as_secs_f64(),
            }
        })
        .collect();
    Ok(ProtocolReport {
        config: cfg.clone(),
        experiments: results,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

impl ProtocolReport {
    pub fn completed(&self) -> impl Iterator<Item = (Experiment, &ExperimentRun)> {
        self.experiments
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|run| (r.experiment, run)))
    }

    pub fn failures(&self) -> usize {
        self.experiments.iter().filter(|r| r.outcome.is_err()).count()
            + self
                .completed()
                .flat_map(|(_, run)| run.runs.iter())
                .filter(|m| m.free_run.is_err())
                .count()
    }

    fn values(&self, model: ModelId, horizon: Horizon, metric: Metric) -> Vec<Option<f64>> {
        self.experiments
            .iter()
            .map(|r| {
                r.outcome
                    .as_ref()
                    .ok()
                    .and_then(|run| run.run(model).aggregate(horizon))
                    .map(|a| a.get(metric))
            })
            .collect()
    }

    /// Mean and sample standard deviation over the experiments where the
    /// value exists.
    pub fn summary(&self, model: ModelId, horizon: Horizon, metric: Metric) -> (f64, f64) {
        let v: Vec<f64> = self.values(model, horizon, metric).into_iter().flatten().collect();
        mean_and_std(&v)
    }

    /// Mean one-step coverage of `model` over the completed experiments.
    pub fn mean_coverage(&self, model: ModelId, horizon: Horizon) -> f64 {
        let v: Vec<f64> = self
            .completed()
            .filter_map(|(_, run)| run.run(model).report(horizon).and_then(|r| r.coverage))
            .collect();
        mean_and_std(&v).0
    }

    /// One row per experiment followed by the average and standard deviation
    /// rows; columns follow [`ModelId::ALL`].
    pub fn table(&self, horizon: Horizon, metric: Metric) -> Vec<TableRow> {
        let cols: Vec<Vec<Option<f64>>> = ModelId::ALL.iter().map(|&m| self.values(m, horizon, metric)).collect();
        let mut rows: Vec<TableRow> = self
            .experiments
            .iter()
            .enumerate()
            .map(|(i, r)| TableRow {
                label: r.experiment.number().to_string(),
                name: r.experiment.to_string(),
                values: [cols[0][i], cols[1][i]],
            })
            .collect();
        let stats: Vec<(f64, f64)> = ModelId::ALL.iter().map(|&m| self.summary(m, horizon, metric)).collect();
        rows.push(TableRow {
            label: "average".into(),
            name: "Average".into(),
            values: [Some(stats[0].0), Some(stats[1].0)],
        });
        rows.push(TableRow {
            label: "std_dev".into(),
            name: "Standard deviation".into(),
            values: [Some(stats[0].1), Some(stats[1].1)],
        });
        rows
    }
}

/// Result of one sweep duration for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub duration: f64,
    pub model: ModelId,
    pub train_rows: usize,
    pub one_step: Option<AggregateMetrics>,
    pub free_run: Option<AggregateMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub rows: Vec<SensitivityRow>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SensitivityResult {
    pub fn get(&self, duration: f64, model: ModelId) -> Option<&SensitivityRow> {
        self.rows.iter().find(|r| r.duration == duration && r.model == model)
    }

    pub fn durations(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.rows.iter().map(|r| r.duration).collect();
        d.dedup();
        d
    }
}

/// Chirp on every input for the first half of each duration and a ramp for
/// the second; train on the first half and simulate over the whole run.
pub fn sensitivity_sweep(cfg: &RunConfig) -> Result<SensitivityResult, RunnerError> {
    cfg.validate()?;
    let started = Instant::now();
    let plant = cfg.plant.build_plant()?;
    let p = &cfg.plant;
    let per_duration: Vec<Vec<SensitivityRow>> = cfg
        .sensitivity
        .durations
        .par_iter()
        .enumerate()
        .map(|(i, &duration)| {
            let outcome = (|| {
                let schedule = InputSchedule::chirp_ramp_all(&cfg.excitation, duration);
                let log = run_experiment(&plant, &schedule, &p.simulation, duration, p.sample_dt)?;
                let data = prepare(log, cfg.narx.lag, 0.5 * duration, cfg.narx.n_max)?;
                let runs = identify(&data, cfg, cfg.derived_seed(1000 + i as u64))?;
                Ok::<_, RunnerError>((data.train.len(), runs))
            })();
            match outcome {
                Ok((train_rows, runs)) => runs
                    .iter()
                    .map(|run| SensitivityRow {
                        duration,
                        model: run.model,
                        train_rows,
                        one_step: run.aggregate(Horizon::OneStep),
                        free_run: run.aggregate(Horizon::FreeRun),
                        error: run.free_run.as_ref().err().cloned(),
                    })
                    .collect(),
                Err(e) => {
                    log::error!("sensitivity duration {duration}: {e}");
                    ModelId::ALL
                        .iter()
                        .map(|&model| SensitivityRow {
                            duration,
                            model,
                            train_rows: 0,
                            one_step: None,
                            free_run: None,
                            error: Some(e.to_string()),
                        })
                        .collect()
                }
            }
        })
        .collect();
    Ok(SensitivityResult {
        rows: per_duration.into_iter().flatten().collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
