use std::path::Path;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::{solve_with_factor, MogpError, StopReason};
use crate::kernels::{
    assemble_noise_free, block_offsets, cross_covariance, factorize_covariance, query_covariance, CovarianceFactor,
    Hyperparameters,
};
use crate::narx::NormalizationMap;
use crate::parallel::{clear_upper_vector_state, flush_subnormals, par};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Variances below this are treated as round-off and clamped silently;
/// anything more negative is clamped with a warning.
const VARIANCE_ROUNDOFF: f64 = -1e-10;
const PREDICT_CHUNK: usize = 128;

/// Predictive mean and marginal variance for every output, in normalized
/// units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Number of variance components clamped to zero.
    pub clamped: usize,
}

impl Prediction {
    pub fn std_dev(&self, q: usize) -> f64 {
        self.variance[q].sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Iterations of the selected restart.
    pub iterations: usize,
    /// Objective evaluations summed over all restarts.
    pub evaluations: usize,
    pub restarts: usize,
    pub best_restart: usize,
    pub negative_log_likelihood: f64,
    pub stop_reason: StopReason,
    /// Final objective of every restart (`None` where the start failed).
    pub restart_objectives: Vec<Option<f64>>,
    /// Seconds spent training. Not persisted, so saved models stay a pure
    /// function of data and seed.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainingMeta {
    /// Meta for a model built from given hyperparameters without training.
    pub fn untrained(negative_log_likelihood: f64) -> Self {
        Self {
            iterations: 0,
            evaluations: 0,
            restarts: 0,
            best_restart: 0,
            negative_log_likelihood,
            stop_reason: StopReason::Running,
            restart_objectives: Vec::new(),
            wall_time_s: 0.0,
        }
    }
}

/// A conditioned multi-output model: hyperparameters, retained training
/// data and the factorization needed for prediction.
#[derive(Debug)]
pub struct TrainedModel {
    hp: Hyperparameters,
    x_train: Vec<Mat<f64>>,
    y_train: Vec<f64>,
    factor: CovarianceFactor,
    alpha: Vec<f64>,
    pub norm: Option<NormalizationMap>,
    pub meta: TrainingMeta,
}

impl Clone for TrainedModel {
    fn clone(&self) -> Self {
        Self::from_parts(
            self.hp.clone(),
            self.x_train.clone(),
            self.y_train.clone(),
            self.norm.clone(),
            self.meta.clone(),
        )
        .expect("a model that factored once factors again")
    }
}

impl TrainedModel {
    /// Condition on `(x_train, y_train)` with fixed hyperparameters.
    pub fn from_parts(
        hp: Hyperparameters,
        x_train: Vec<Mat<f64>>,
        y_train: Vec<f64>,
        norm: Option<NormalizationMap>,
        meta: TrainingMeta,
    ) -> Result<Self, MogpError> {
        let n = block_offsets(&x_train)[x_train.len()];
        if y_train.len() != n {
            return Err(MogpError::DimensionMismatch(format!("{} targets for {n} inputs", y_train.len())));
        }
        let factor = factorize_covariance(&hp, &x_train)?;
        let alpha = solve_with_factor(&factor, &y_train);
        Ok(Self {
            hp,
            x_train,
            y_train,
            factor,
            alpha,
            norm,
            meta,
        })
    }

    /// Condition with fixed hyperparameters, recording the likelihood.
    pub fn condition(
        hp: Hyperparameters,
        x_train: Vec<Mat<f64>>,
        y_train: Vec<f64>,
        norm: Option<NormalizationMap>,
    ) -> Result<Self, MogpError> {
        let mut model = Self::from_parts(hp, x_train, y_train, norm, TrainingMeta::untrained(f64::NAN))?;
        model.meta.negative_log_likelihood = -model.log_marginal_likelihood();
        Ok(model)
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn x_train(&self) -> &[Mat<f64>] {
        &self.x_train
    }

    pub fn y_train(&self) -> &[f64] {
        &self.y_train
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cholesky(&self) -> MatRef<'_, f64> {
        self.factor.l()
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn jitter_level(&self) -> u32 {
        self.factor.level
    }

    pub fn outputs(&self) -> usize {
        self.hp.outputs()
    }

    pub fn dim(&self) -> usize {
        self.hp.dim()
    }

    /// The factored matrix: noisy covariance plus the jitter actually used.
    pub fn covariance(&self) -> Mat<f64> {
        let mut k = assemble_noise_free(&self.hp, &self.x_train).expect("validated at construction");
        let off = block_offsets(&self.x_train);
        for q in 0..self.x_train.len() {
            for i in off[q]..off[q + 1] {
                k[(i, i)] += self.hp.noise_variance(q) + self.factor.jitter;
            }
        }
        k
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let fit: f64 = self.y_train.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * self.factor.log_det() - 0.5 * fit - 0.5 * self.y_train.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    fn finish_variance(&self, raw: f64, clamped: &mut usize) -> f64 {
        if raw >= 0.0 {
            return raw;
        }
        *clamped += 1;
        if raw < VARIANCE_ROUNDOFF {
            log::warn!("predictive variance {raw:e} clamped to zero");
        }
        0.0
    }

    /// `k_q α` row by row in a fixed summation order, so a query gets the
    /// same mean whatever batch it is evaluated in.
    fn means_from(&self, kq: MatRef<'_, f64>) -> Vec<f64> {
        (0..kq.nrows())
            .map(|r| (0..kq.ncols()).map(|j| kq[(r, j)] * self.alpha[j]).sum())
            .collect()
    }

    /// Mean and marginal variance of every output at each row of `query`.
    pub fn predict_batch(&self, query: MatRef<'_, f64>) -> Vec<Prediction> {
        flush_subnormals();
        let nq = self.outputs();
        let mut out = Vec::with_capacity(query.nrows());
        let mut start = 0;
        while start < query.nrows() {
            let m = PREDICT_CHUNK.min(query.nrows() - start);
            let chunk = query.subrows(start, m);
            let kq = query_covariance(&self.hp, chunk, &self.x_train);
            let mean = self.means_from(kq.as_ref());
            let mut v = kq.transpose().to_owned();
            solve_lower_triangular_in_place(self.factor.l(), v.as_mut(), par());
            clear_upper_vector_state();
            for i in 0..m {
                let mut clamped = 0;
                let mut p = Prediction {
                    mean: Vec::with_capacity(nq),
                    variance: Vec::with_capacity(nq),
                    clamped: 0,
                };
                for q in 0..nq {
                    let col = q * m + i;
                    let explained: f64 = (0..v.nrows()).map(|r| v[(r, col)] * v[(r, col)]).sum();
                    p.mean.push(mean[col]);
                    let raw = self.hp.prior_variance(q) - explained;
                    p.variance.push(self.finish_variance(raw, &mut clamped));
                }
                p.clamped = clamped;
                out.push(p);
            }
            start += m;
        }
        out
    }

    /// Predictive means only, row by row: `[row][output]`.
    pub fn predict_mean_batch(&self, query: MatRef<'_, f64>) -> Vec<Vec<f64>> {
        flush_subnormals();
        let nq = self.outputs();
        let m = query.nrows();
        let kq = query_covariance(&self.hp, query, &self.x_train);
        let mean = self.means_from(kq.as_ref());
        (0..m).map(|i| (0..nq).map(|q| mean[q * m + i]).collect()).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let q = Mat::from_fn(1, x.len(), |_, k| x[k]);
        self.predict_batch(q.as_ref()).pop().expect("one query row")
    }

    /// Prediction together with the full `Q x Q` predictive covariance of
    /// the noise-free outputs at `x`.
    pub fn predict_with_covariance(&self, x: &[f64]) -> (Prediction, Mat<f64>) {
        flush_subnormals();
        let nq = self.outputs();
        let query = Mat::from_fn(1, x.len(), |_, k| x[k]);
        let kq = query_covariance(&self.hp, query.as_ref(), &self.x_train);
        let mut v = kq.transpose().to_owned();
        solve_lower_triangular_in_place(self.factor.l(), v.as_mut(), par());
        clear_upper_vector_state();
        let mut cov = Mat::<f64>::zeros(nq, nq);
        for a in 0..nq {
            for b in 0..=a {
                let explained: f64 = (0..v.nrows()).map(|r| v[(r, a)] * v[(r, b)]).sum();
                let c = cross_covariance(&self.hp, a, b, x, x) - explained;
                cov[(a, b)] = c;
                cov[(b, a)] = c;
            }
        }
        (self.predict(x), cov)
    }

    pub fn to_document(&self) -> TrainedModelDocument {
        TrainedModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            hyperparameters: self.hp.clone(),
            x_train: self
                .x_train
                .iter()
                .map(|x| (0..x.nrows()).map(|i| (0..x.ncols()).map(|k| x[(i, k)]).collect()).collect())
                .collect(),
            y_train: self.y_train.clone(),
            normalization: self.norm.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_document(doc: TrainedModelDocument) -> Result<Self, MogpError> {
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(MogpError::SchemaVersion {
                found: doc.schema_version,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let d = doc.hyperparameters.dim();
        let mut xs = Vec::with_capacity(doc.x_train.len());
        for rows in &doc.x_train {
            if rows.iter().any(|r| r.len() != d) {
                return Err(MogpError::DimensionMismatch(format!("training rows must have {d} entries")));
            }
            xs.push(Mat::from_fn(rows.len(), d, |i, k| rows[i][k]));
        }
        Self::from_parts(doc.hyperparameters, xs, doc.y_train, doc.normalization, doc.meta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MogpError> {
        let doc: TrainedModelDocument = serde_json::from_str(text).map_err(|e| MogpError::Json(e.to_string()))?;
        Self::from_document(doc)
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

/// On-disk form of a [`TrainedModel`]. The factorization is recomputed on
/// load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModelDocument {
    pub schema_version: u32,
    pub hyperparameters: Hyperparameters,
    /// `[output][row][regressor]`
    pub x_train: Vec<Vec<Vec<f64>>>,
    /// Stacked output by output.
    pub y_train: Vec<f64>,
    #[serde(default)]
    pub normalization: Option<NormalizationMap>,
    pub meta: TrainingMeta,
}
