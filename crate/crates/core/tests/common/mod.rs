//! Reference implementations shared by the integration and acceptance tests.
//! Everything here is written independently of the library's numerics: the
//! quadrature evaluates the convolution integral directly, and the dense
//! oracles use nalgebra's LU inverse and determinant.
#![allow(dead_code)]

use auvgp::kernels::{smoothing_kernel, Hyperparameters};
use auvgp::mogp::log_marginal_likelihood;
use faer::Mat;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G_WEIGHTS[3];
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth >= 40 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    recurse(f, a, b, tol, 0)
}

/// `Σ_r σ_r² ∫ k_qr(x - z) k_sr(x2 - z) dz` by numerical quadrature, for
/// one- and two-dimensional inputs.
pub fn convolution_by_quadrature(hp: &Hyperparameters, q: usize, s: usize, x: &[f64], x2: &[f64]) -> f64 {
    let d = hp.dim();
    assert!(d == 1 || d == 2);
    let mut total = 0.0;
    for r in 0..hp.latents() {
        let widest = hp
            .length_scales(q, r)
            .into_iter()
            .chain(hp.length_scales(s, r))
            .fold(0.0f64, f64::max);
        let half = 12.0 * widest + 1.0;
        let bounds: Vec<(f64, f64)> = (0..d)
            .map(|k| {
                let c = 0.5 * (x[k] + x2[k]);
                (c - half, c + half)
            })
            .collect();
        let scale = hp.sensitivity(q, r).abs() * hp.sensitivity(s, r).abs() + 1e-300;
        let tol = 1e-13 * scale;
        let integrand = |z: &[f64]| {
            let a: Vec<f64> = x.iter().zip(z).map(|(xi, zi)| xi - zi).collect();
            let b: Vec<f64> = x2.iter().zip(z).map(|(xi, zi)| xi - zi).collect();
            smoothing_kernel(hp, q, r, &a) * smoothing_kernel(hp, s, r, &b)
        };
        let value = if d == 1 {
            integrate(&|z| integrand(&[z]), bounds[0].0, bounds[0].1, tol)
        } else {
            let outer = |z0: f64| {
                integrate(&|z1| integrand(&[z0, z1]), bounds[1].0, bounds[1].1, tol)
            };
            integrate(&outer, bounds[0].0, bounds[0].1, tol)
        };
        total += hp.latent_variance(r) * value;
    }
    total
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every parameter drawn uniformly from `[lo, hi]` (log-space for scales and
/// variances, raw for the scaled sensitivities).
pub fn random_hp(
    rng: &mut ChaCha8Rng,
    outputs: usize,
    latents: usize,
    dim: usize,
    private: bool,
    lo: f64,
    hi: f64,
) -> Hyperparameters {
    let mut hp = Hyperparameters::new(outputs, latents, dim, private);
    let v: Vec<f64> = (0..hp.n_params()).map(|_| rng.random_range(lo..hi)).collect();
    hp.set_from_vector(&v).unwrap();
    hp
}

pub fn random_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> Mat<f64> {
    Mat::from_fn(n, dim, |_, _| rng.random_range(-spread..spread))
}

pub fn random_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn to_dmatrix(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn row(m: &Mat<f64>, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|k| m[(i, k)]).collect()
}

/// Noisy training covariance built pointwise from `cross_covariance`.
pub fn dense_covariance(hp: &Hyperparameters, xs: &[Mat<f64>], jitter: f64) -> DMatrix<f64> {
    let mut index = Vec::new();
    for (q, x) in xs.iter().enumerate() {
        for i in 0..x.nrows() {
            index.push((q, row(x, i)));
        }
    }
    let n = index.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (q, xi) = &index[i];
        let (s, xj) = &index[j];
        let mut v = auvgp::kernels::cross_covariance(hp, *q, *s, xi, xj);
        if i == j {
            v += hp.noise_variance(*q) + jitter;
        }
        v
    })
}

/// Log density of `y` under `N(0, K)` using an explicit inverse and
/// determinant.
pub fn dense_log_likelihood(k: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let y = DVector::from_column_slice(y);
    let inv = k.clone().try_inverse().expect("invertible");
    let det = k.determinant();
    -0.5 * det.ln() - 0.5 * (y.transpose() * inv * &y)[(0, 0)] - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Predictive mean and variance of every output at `x` from the explicit
/// inverse of the training covariance.
pub fn dense_predict(
    hp: &Hyperparameters,
    xs: &[Mat<f64>],
    k: &DMatrix<f64>,
    y: &[f64],
    x: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let inv = k.clone().try_inverse().expect("invertible");
    let y = DVector::from_column_slice(y);
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for q in 0..hp.outputs() {
        let mut kstar = Vec::new();
        for (s, xsm) in xs.iter().enumerate() {
            for j in 0..xsm.nrows() {
                kstar.push(auvgp::kernels::cross_covariance(hp, q, s, x, &row(xsm, j)));
            }
        }
        let kstar = DVector::from_vec(kstar);
        mean.push(kstar.dot(&(&inv * &y)));
        let prior = auvgp::kernels::cross_covariance(hp, q, q, x, x);
        var.push(prior - kstar.dot(&(&inv * &kstar)));
    }
    (mean, var)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random hyperparameters, `q` input sets of `n` rows and targets.
pub fn instance(
    seed: u64,
    q: usize,
    r: usize,
    d: usize,
    n: usize,
    private: bool,
) -> (Hyperparameters, Vec<Mat<f64>>, Vec<f64>) {
    let mut rng = rng(seed);
    let hp = random_hp(&mut rng, q, r, d, private, -1.0, 1.0);
    let xs: Vec<Mat<f64>> = (0..q).map(|_| random_inputs(&mut rng, n, d, 1.5)).collect();
    let y = random_targets(&mut rng, q * n);
    (hp, xs, y)
}

/// Central differences of the log marginal likelihood in log-parameter space.
pub fn finite_difference(hp: &Hyperparameters, xs: &[Mat<f64>], y: &[f64], h: f64) -> Vec<f64> {
    let theta = hp.to_vector();
    (0..theta.len())
        .map(|i| {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = log_marginal_likelihood(&Hyperparameters::from_vector(hp, &plus).unwrap(), xs, y).unwrap();
            let fm = log_marginal_likelihood(&Hyperparameters::from_vector(hp, &minus).unwrap(), xs, y).unwrap();
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
