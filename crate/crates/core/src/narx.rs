//! Lag embedding of trajectory logs into regression datasets.
//!
//! Channels are ordered `u, v, w, p, q, r, n, delta_rudder, delta_elevator`.
//! Regressor column `c * L + (l - 1)` holds channel `c` at lag `l`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::plant::TrajectoryLog;

pub const N_OUTPUTS: usize = 6;
pub const N_INPUTS: usize = 3;
pub const N_CHANNELS: usize = N_OUTPUTS + N_INPUTS;
pub const CHANNEL_NAMES: [&str; N_CHANNELS] =
    ["u", "v", "w", "p", "q", "r", "n", "delta_rudder", "delta_elevator"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NarxError {
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("log of {len} samples is too short for lag {lag}")]
    LogTooShort { len: usize, lag: usize },
    #[error("lag order must be at least 1")]
    InvalidLag,
    #[error("split leaves {train} training and {validation} validation rows")]
    DegenerateSplit { train: usize, validation: usize },
    #[error("no samples at or before t = {0}")]
    EmptySegment(f64),
}

/// Affine map of one channel onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub center: f64,
    pub half_range: f64,
}

impl ChannelScale {
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.center) / self.half_range
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.half_range + self.center
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMap {
    pub channels: [ChannelScale; N_CHANNELS],
    /// Last sample time included in the statistics (`None`: whole log).
    pub segment_end: Option<f64>,
    /// Number of samples the statistics were computed from.
    pub samples: usize,
}

impl NormalizationMap {
    pub fn normalize(&self, channel: usize, v: f64) -> f64 {
        self.channels[channel].normalize(v)
    }

    pub fn denormalize(&self, channel: usize, v: f64) -> f64 {
        self.channels[channel].denormalize(v)
    }

    pub fn normalize_row(&self, raw: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
        std::array::from_fn(|c| self.normalize(c, raw[c]))
    }
}

/// Channel statistics over the samples with `t <= segment_end` (the whole
/// log when `segment_end` is `None`). Constant channels get a unit half-range.
pub fn build_normalization(log: &TrajectoryLog, segment_end: Option<f64>) -> Result<NormalizationMap, NarxError> {
    if log.is_empty() {
        return Err(NarxError::EmptyLog);
    }
    let mut lo = [f64::INFINITY; N_CHANNELS];
    let mut hi = [f64::NEG_INFINITY; N_CHANNELS];
    let mut samples = 0;
    for i in 0..log.len() {
        if segment_end.is_some_and(|end| log.t[i] > end) {
            continue;
        }
        samples += 1;
        for (c, v) in log.channels(i).into_iter().enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    if samples == 0 {
        return Err(NarxError::EmptySegment(segment_end.unwrap_or(f64::NAN)));
    }
    let channels = std::array::from_fn(|c| {
        let half = 0.5 * (hi[c] - lo[c]);
        ChannelScale {
            center: 0.5 * (hi[c] + lo[c]),
            half_range: if half > 0.0 { half } else { 1.0 },
        }
    });
    Ok(NormalizationMap {
        channels,
        segment_end,
        samples,
    })
}

/// Regressor column of channel `channel` at lag `lag` (1-based).
pub fn regressor_column(channel: usize, lag: usize, order: usize) -> usize {
    channel * order + (lag - 1)
}

pub fn regressor_dim(order: usize) -> usize {
    N_CHANNELS * order
}

/// Regressor vector for predicting step `k` from normalized channel
/// history, where `history(j)` returns the normalized channels at `k - j`.
pub fn regressor_from_history(order: usize, mut history: impl FnMut(usize) -> [f64; N_CHANNELS]) -> Vec<f64> {
    let mut x = vec![0.0; regressor_dim(order)];
    for lag in 1..=order {
        let row = history(lag);
        for (c, v) in row.into_iter().enumerate() {
            x[regressor_column(c, lag, order)] = v;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    /// `N x 9L` regressors.
    pub x: Mat<f64>,
    /// `N x 6` targets.
    pub y: Mat<f64>,
    /// Index into the source log of each row's target sample.
    pub t_index: Vec<usize>,
    /// Time of each row's target sample.
    pub t: Vec<f64>,
    pub norm: NormalizationMap,
    pub lag: usize,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn regressor(&self, i: usize) -> Vec<f64> {
        (0..self.x.ncols()).map(|k| self.x[(i, k)]).collect()
    }

    pub fn target(&self, i: usize) -> [f64; N_OUTPUTS] {
        std::array::from_fn(|q| self.y[(i, q)])
    }

    /// Target column `q`.
    pub fn target_channel(&self, q: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.y[(i, q)]).collect()
    }

    /// Targets stacked output by output, matching `Q` copies of `x`.
    pub fn stacked_targets(&self) -> Vec<f64> {
        (0..N_OUTPUTS).flat_map(|q| self.target_channel(q)).collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: Mat::from_fn(rows.len(), self.x.ncols(), |i, k| self.x[(rows[i], k)]),
            y: Mat::from_fn(rows.len(), self.y.ncols(), |i, k| self.y[(rows[i], k)]),
            t_index: rows.iter().map(|&i| self.t_index[i]).collect(),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            norm: self.norm.clone(),
            lag: self.lag,
        }
    }
}

/// Lag-embed the whole log with normalization `norm`.
pub fn embed(log: &TrajectoryLog, lag: usize, norm: &NormalizationMap) -> Result<RegressionDataset, NarxError> {
    if lag == 0 {
        return Err(NarxError::InvalidLag);
    }
    if log.len() <= lag {
        return Err(NarxError::LogTooShort { len: log.len(), lag });
    }
    let normalized: Vec<[f64; N_CHANNELS]> = (0..log.len()).map(|i| norm.normalize_row(&log.channels(i))).collect();
    let rows: Vec<usize> = (lag..log.len()).collect();
    let d = regressor_dim(lag);
    let mut x = Mat::<f64>::zeros(rows.len(), d);
    for (i, &k) in rows.iter().enumerate() {
        let reg = regressor_from_history(lag, |j| normalized[k - j]);
        for (c, v) in reg.into_iter().enumerate() {
            x[(i, c)] = v;
        }
    }
    let y = Mat::from_fn(rows.len(), N_OUTPUTS, |i, q| normalized[rows[i]][q]);
    Ok(RegressionDataset {
        x,
        y,
        t: rows.iter().map(|&k| log.t[k]).collect(),
        t_index: rows,
        norm: norm.clone(),
        lag,
    })
}

/// Rows with target time `<= boundary` train, the rest validate. Order is
/// preserved on both sides.
pub fn split(dataset: &RegressionDataset, boundary: f64) -> Result<(RegressionDataset, RegressionDataset), NarxError> {
    let (train, validation): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| dataset.t[i] <= boundary);
    if train.is_empty() || validation.is_empty() {
        return Err(NarxError::DegenerateSplit {
            train: train.len(),
            validation: validation.len(),
        });
    }
    Ok((dataset.select(&train), dataset.select(&validation)))
}

/// At most `n_max` rows chosen with uniform stride (`floor(i · n / n_max)`).
pub fn subsample(dataset: &RegressionDataset, n_max: usize) -> RegressionDataset {
    let n = dataset.len();
    if n <= n_max || n_max == 0 {
        return dataset.clone();
    }
    let rows: Vec<usize> = (0..n_max).map(|i| i * n / n_max).collect();
    dataset.select(&rows)
}
