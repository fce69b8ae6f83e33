use std::path::Path;
use std::time::Instant;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Prediction, TrainedModel, TrainedModelDocument, TrainingMeta, MODEL_SCHEMA_VERSION};
use super::optimize::{Lbfgs, LbfgsSettings};
use super::{likelihood_and_gradient, MogpError};
use crate::kernels::Hyperparameters;
use crate::narx::NormalizationMap;

/// Settings for hyperparameter optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of shared latent functions.
    pub latents: usize,
    /// Add a private latent per output.
    pub independent_terms: bool,
    pub restarts: usize,
    /// Set by the caller per run; not part of the config document.
    #[serde(skip)]
    pub seed: u64,
    /// Initial parameters are drawn from `[-init_range, init_range]`.
    pub init_range: f64,
    pub init_noise_log_variance: f64,
    /// Lower bound of the noise log-variances; the other parameters use the
    /// optimizer box.
    pub min_noise_log_variance: f64,
    /// When positive, every restart first runs this many iterations and only
    /// the best one is carried on to convergence.
    pub screening_iterations: usize,
    pub optimizer: LbfgsSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latents: 2,
            independent_terms: false,
            restarts: 5,
            seed: 0,
            init_range: 1.0,
            init_noise_log_variance: -3.0,
            min_noise_log_variance: -25.0,
            screening_iterations: 15,
            optimizer: LbfgsSettings::default(),
        }
    }
}

fn initial_point(template: &Hyperparameters, rng: &mut ChaCha8Rng, cfg: &TrainConfig) -> Vec<f64> {
    let mut hp = template.clone();
    let r = cfg.init_range;
    let mut draw = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.random_range(-r..=r));
    draw(&mut hp.sensitivities);
    draw(&mut hp.log_length_scales);
    draw(&mut hp.log_latent_variances);
    hp.log_noise_variances.iter_mut().for_each(|x| *x = cfg.init_noise_log_variance);
    if let Some(p) = &mut hp.private {
        draw(&mut p.sensitivities);
        draw(&mut p.log_length_scales);
    }
    hp.to_vector()
}

/// Fit hyperparameters by maximizing the log marginal likelihood from
/// several seeded random starts and condition on the data with the best.
///
/// `xs[q]` holds the inputs of output `q`; `y` stacks the targets output by
/// output.
pub fn train(
    xs: Vec<Mat<f64>>,
    y: Vec<f64>,
    norm: Option<NormalizationMap>,
    cfg: &TrainConfig,
) -> Result<TrainedModel, MogpError> {
    let started = Instant::now();
    let dim = xs.first().map_or(0, |x| x.ncols());
    let template = Hyperparameters::new(xs.len(), cfg.latents, dim, cfg.independent_terms);
    template.validate()?;
    let mut objective = |theta: &[f64]| {
        let hp = Hyperparameters::from_vector(&template, theta).ok()?;
        let (l, g) = likelihood_and_gradient(&hp, &xs, &y).ok()?;
        Some((-l, g.into_iter().map(|v| -v).collect::<Vec<_>>()))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let restarts = cfg.restarts.max(1);
    let starts: Vec<Vec<f64>> = (0..restarts).map(|_| initial_point(&template, &mut rng, cfg)).collect();

    let mut runs: Vec<Option<Lbfgs>> = Vec::with_capacity(restarts);
    let mut evaluations = 0;
    let n = template.n_params();
    let mut lower = vec![cfg.optimizer.lower; n];
    let upper = vec![cfg.optimizer.upper; n];
    let noise = template.noise_offset();
    lower[noise..noise + template.outputs()].fill(cfg.min_noise_log_variance);
    for (i, x0) in starts.iter().enumerate() {
        let state = Lbfgs::start_bounded(&mut objective, x0, cfg.optimizer.clone(), lower.clone(), upper.clone());
        if state.is_none() {
            log::warn!("restart {i} could not be evaluated at its initial point");
        }
        runs.push(state);
    }
    if runs.iter().all(Option::is_none) {
        return Err(MogpError::AllRestartsFailed { restarts });
    }
    let full = cfg.optimizer.max_iterations + 1;
    let screening = cfg.screening_iterations > 0 && restarts > 1;
    for (i, run) in runs.iter_mut().enumerate() {
        if let Some(state) = run {
            state.run(&mut objective, if screening { cfg.screening_iterations } else { full });
            log::debug!("restart {i}: objective {:.6} after {} iterations", state.value(), state.iterations());
        }
    }
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|s| (i, s.value())))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
        .expect("at least one restart started");
    if screening {
        if let Some(state) = runs[best].as_mut() {
            state.run(&mut objective, full);
        }
    }
    for state in runs.iter().flatten() {
        evaluations += state.evaluations();
    }
    let chosen = runs[best].as_ref().expect("best restart exists");
    let hp = Hyperparameters::from_vector(&template, chosen.x())?;
    let meta = TrainingMeta {
        iterations: chosen.iterations(),
        evaluations,
        restarts,
        best_restart: best,
        negative_log_likelihood: chosen.value(),
        stop_reason: chosen.reason(),
        restart_objectives: runs.iter().map(|r| r.as_ref().map(|s| s.value())).collect(),
        wall_time_s: 0.0,
    };
    log::info!(
        "trained {} outputs: -log L = {:.6}, restart {best}, {} iterations ({:?})",
        hp.outputs(),
        meta.negative_log_likelihood,
        meta.iterations,
        meta.stop_reason
    );
    let mut model = TrainedModel::from_parts(hp, xs, y, norm, meta)?;
    model.meta.wall_time_s = started.elapsed().as_secs_f64();
    Ok(model)
}

/// Train on a dataset whose outputs share one regressor matrix: `x` is
/// `N x D`, `y` is `N x Q`.
pub fn train_shared(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    norm: Option<NormalizationMap>,
    cfg: &TrainConfig,
) -> Result<TrainedModel, MogpError> {
    let xs = (0..y.ncols()).map(|_| x.to_owned()).collect();
    let stacked = (0..y.ncols()).flat_map(|q| (0..y.nrows()).map(move |i| y[(i, q)])).collect();
    train(xs, stacked, norm, cfg)
}

/// One single-output model per target column, each with a single latent and
/// no private term. Output `q` uses seed `cfg.seed + q`.
pub fn train_independent_baseline(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    norm: Option<NormalizationMap>,
    cfg: &TrainConfig,
) -> Result<IndependentModel, MogpError> {
    let started = Instant::now();
    let mut models = Vec::with_capacity(y.ncols());
    for q in 0..y.ncols() {
        let single = TrainConfig {
            latents: 1,
            independent_terms: false,
            seed: cfg.seed.wrapping_add(q as u64),
            ..cfg.clone()
        };
        let target: Vec<f64> = (0..y.nrows()).map(|i| y[(i, q)]).collect();
        models.push(train(vec![x.to_owned()], target, None, &single)?);
    }
    Ok(IndependentModel {
        models,
        norm,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Per-output single-output models predicting side by side.
#[derive(Debug, Clone)]
pub struct IndependentModel {
    pub models: Vec<TrainedModel>,
    pub norm: Option<NormalizationMap>,
    pub wall_time_s: f64,
}

/// Common prediction interface of the coupled and the decoupled model.
pub trait Predictor {
    fn outputs(&self) -> usize;
    fn dim(&self) -> usize;
    fn normalization(&self) -> Option<&NormalizationMap>;
    /// Observation noise variance of output `q`.
    fn noise_variance(&self, q: usize) -> f64;
    fn predict_batch(&self, x: MatRef<'_, f64>) -> Vec<Prediction>;
    /// Means only, `[row][output]`.
    fn predict_mean_batch(&self, x: MatRef<'_, f64>) -> Vec<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Prediction {
        let q = Mat::from_fn(1, x.len(), |_, k| x[k]);
        self.predict_batch(q.as_ref()).pop().expect("one query row")
    }
}

impl Predictor for TrainedModel {
    fn outputs(&self) -> usize {
        TrainedModel::outputs(self)
    }

    fn dim(&self) -> usize {
        TrainedModel::dim(self)
    }

    fn normalization(&self) -> Option<&NormalizationMap> {
        self.norm.as_ref()
    }

    fn noise_variance(&self, q: usize) -> f64 {
        self.hyperparameters().noise_variance(q)
    }

    fn predict_batch(&self, x: MatRef<'_, f64>) -> Vec<Prediction> {
        TrainedModel::predict_batch(self, x)
    }

    fn predict_mean_batch(&self, x: MatRef<'_, f64>) -> Vec<Vec<f64>> {
        TrainedModel::predict_mean_batch(self, x)
    }
}

impl Predictor for IndependentModel {
    fn outputs(&self) -> usize {
        self.models.len()
    }

    fn dim(&self) -> usize {
        self.models.first().map_or(0, |m| m.dim())
    }

    fn normalization(&self) -> Option<&NormalizationMap> {
        self.norm.as_ref()
    }

    fn noise_variance(&self, q: usize) -> f64 {
        self.models[q].hyperparameters().noise_variance(0)
    }

    fn predict_batch(&self, x: MatRef<'_, f64>) -> Vec<Prediction> {
        let per_output: Vec<Vec<Prediction>> = self.models.iter().map(|m| m.predict_batch(x)).collect();
        (0..x.nrows())
            .map(|i| Prediction {
                mean: per_output.iter().map(|p| p[i].mean[0]).collect(),
                variance: per_output.iter().map(|p| p[i].variance[0]).collect(),
                clamped: per_output.iter().map(|p| p[i].clamped).sum(),
            })
            .collect()
    }

    fn predict_mean_batch(&self, x: MatRef<'_, f64>) -> Vec<Vec<f64>> {
        let per_output: Vec<Vec<Vec<f64>>> = self.models.iter().map(|m| m.predict_mean_batch(x)).collect();
        (0..x.nrows()).map(|i| per_output.iter().map(|p| p[i][0]).collect()).collect()
    }
}

/// A saved model of either kind.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Mogp(TrainedModel),
    Independent(IndependentModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelFile {
    Mogp {
        model: TrainedModelDocument,
    },
    Independent {
        schema_version: u32,
        #[serde(default)]
        normalization: Option<NormalizationMap>,
        models: Vec<TrainedModelDocument>,
    },
}

impl AnyModel {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            AnyModel::Mogp(m) => m,
            AnyModel::Independent(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        let file = match self {
            AnyModel::Mogp(m) => ModelFile::Mogp { model: m.to_document() },
            AnyModel::Independent(m) => ModelFile::Independent {
                schema_version: MODEL_SCHEMA_VERSION,
                normalization: m.norm.clone(),
                models: m.models.iter().map(|m| m.to_document()).collect(),
            },
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MogpError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| MogpError::Json(e.to_string()))?;
        match file {
            ModelFile::Mogp { model } => Ok(AnyModel::Mogp(TrainedModel::from_document(model)?)),
            ModelFile::Independent {
                schema_version,
                normalization,
                models,
            } => {
                if schema_version != MODEL_SCHEMA_VERSION {
                    return Err(MogpError::SchemaVersion {
                        found: schema_version,
                        expected: MODEL_SCHEMA_VERSION,
                    });
                }
                let models = models
                    .into_iter()
                    .map(TrainedModel::from_document)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(AnyModel::Independent(IndependentModel {
                    models,
                    norm: normalization,
                    wall_time_s: 0.0,
                }))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MogpError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| MogpError::Io(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MogpError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| MogpError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}
