use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Why a minimization run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ObjectiveChange,
    ProjectedGradient,
    MaxIterations,
    LineSearchFailed,
    /// Still running; only seen on paused states.
    Running,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the objective changes by less than this on two consecutive
    /// iterations.
    pub f_tol: f64,
    /// Stop when the projected gradient infinity norm falls below this.
    pub g_tol: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            f_tol: 1e-7,
            g_tol: 1e-6,
            lower: -7.0,
            upper: 7.0,
        }
    }
}

/// Box-constrained limited-memory BFGS on a projected path with Armijo
/// backtracking. The state can be advanced a few iterations at a time.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    settings: LbfgsSettings,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    iterations: usize,
    evaluations: usize,
    reason: StopReason,
    stalled: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

impl Lbfgs {
    /// Starts at the projection of `x0`. Returns `None` if the objective
    /// cannot be evaluated there.
    pub fn start<F>(objective: &mut F, x0: &[f64], settings: LbfgsSettings) -> Option<Self>
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        let lower = vec![settings.lower; x0.len()];
        let upper = vec![settings.upper; x0.len()];
        Self::start_bounded(objective, x0, settings, lower, upper)
    }

    /// Like [`Lbfgs::start`] with per-coordinate bounds replacing the scalar
    /// ones of `settings`.
    pub fn start_bounded<F>(
        objective: &mut F,
        x0: &[f64],
        settings: LbfgsSettings,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Option<Self>
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        assert!(lower.len() == x0.len() && upper.len() == x0.len(), "bounds must match the start point");
        let x: Vec<f64> = (0..x0.len()).map(|i| x0[i].clamp(lower[i], upper[i])).collect();
        let (f, g) = objective(&x).filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite()))?;
        Some(Self {
            settings,
            lower,
            upper,
            x,
            f,
            g,
            pairs: VecDeque::new(),
            iterations: 0,
            evaluations: 1,
            reason: StopReason::Running,
            stalled: false,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn value(&self) -> f64 {
        self.f
    }

    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn reason(&self) -> StopReason {
        self.reason
    }

    pub fn finished(&self) -> bool {
        self.reason != StopReason::Running
    }

    fn at_lower(&self, i: usize) -> bool {
        self.x[i] <= self.lower[i]
    }

    fn at_upper(&self, i: usize) -> bool {
        self.x[i] >= self.upper[i]
    }

    /// Infinity norm of `x - P(x - g)`.
    pub fn projected_gradient_norm(&self) -> f64 {
        (0..self.x.len())
            .map(|i| (self.x[i] - (self.x[i] - self.g[i]).clamp(self.lower[i], self.upper[i])).abs())
            .fold(0.0, f64::max)
    }

    fn blocked(&self, i: usize, d: f64) -> bool {
        (self.at_lower(i) && d < 0.0) || (self.at_upper(i) && d > 0.0)
    }

    fn direction(&self) -> Vec<f64> {
        let n = self.x.len();
        // Variables pinned at a bound with the gradient pushing outward are
        // held fixed for this iteration.
        let free: Vec<bool> = (0..n).map(|i| !self.blocked(i, -self.g[i])).collect();
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { self.g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        (0..n)
            .map(|i| if free[i] && !self.blocked(i, -q[i]) { -q[i] } else { 0.0 })
            .collect()
    }

    fn steepest(&self) -> Vec<f64> {
        (0..self.x.len())
            .map(|i| if self.blocked(i, -self.g[i]) { 0.0 } else { -self.g[i] })
            .collect()
    }

    fn line_search<F>(&mut self, objective: &mut F, d: &[f64]) -> Option<(Vec<f64>, f64, Vec<f64>)>
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dmax == 0.0 {
            return None;
        }
        let mut step = if self.pairs.is_empty() { (1.0 / dmax).min(1.0) } else { 1.0 };
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = (0..self.x.len())
                .map(|i| (self.x[i] + step * d[i]).clamp(self.lower[i], self.upper[i]))
                .collect();
            let decrease: f64 = self
                .g
                .iter()
                .zip(trial.iter().zip(&self.x))
                .map(|(g, (t, x))| g * (t - x))
                .sum();
            if decrease < 0.0 {
                self.evaluations += 1;
                if let Some((f, g)) = objective(&trial) {
                    if f.is_finite() && g.iter().all(|v| v.is_finite()) && f <= self.f + ARMIJO * decrease {
                        return Some((trial, f, g));
                    }
                }
            }
            step *= 0.5;
        }
        None
    }

    /// Advance by at most `iterations` iterations; returns early once a stop
    /// criterion is met.
    pub fn run<F>(&mut self, objective: &mut F, iterations: usize)
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        for _ in 0..iterations {
            if self.finished() {
                return;
            }
            if self.projected_gradient_norm() < self.settings.g_tol {
                self.reason = StopReason::ProjectedGradient;
                return;
            }
            if self.iterations >= self.settings.max_iterations {
                self.reason = StopReason::MaxIterations;
                return;
            }
            let mut d = self.direction();
            if dot(&d, &self.g) >= 0.0 {
                self.pairs.clear();
                d = self.steepest();
            }
            let accepted = match self.line_search(objective, &d) {
                Some(r) => Some(r),
                None if !self.pairs.is_empty() => {
                    self.pairs.clear();
                    let d = self.steepest();
                    self.line_search(objective, &d)
                }
                None => None,
            };
            let Some((x_new, f_new, g_new)) = accepted else {
                self.reason = StopReason::LineSearchFailed;
                return;
            };
            let s: Vec<f64> = x_new.iter().zip(&self.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&self.g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                if self.pairs.len() == self.settings.memory {
                    self.pairs.pop_front();
                }
                self.pairs.push_back((s, y, 1.0 / sy));
            }
            let change = (self.f - f_new).abs();
            self.x = x_new;
            self.f = f_new;
            self.g = g_new;
            self.iterations += 1;
            // A single short step after heavy backtracking is not convergence:
            // the criterion must hold twice in a row, with fresh curvature
            // pairs in between.
            if change < self.settings.f_tol {
                if self.stalled {
                    self.reason = StopReason::ObjectiveChange;
                    return;
                }
                self.stalled = true;
                self.pairs.clear();
            } else {
                self.stalled = false;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Minimize from `x0` until a stop criterion is met.
pub fn minimize<F>(mut objective: F, x0: &[f64], settings: LbfgsSettings) -> Option<Lbfgs>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut state = Lbfgs::start(&mut objective, x0, settings)?;
    let budget = state.settings.max_iterations + 1;
    state.run(&mut objective, budget);
    Some(state)
}
