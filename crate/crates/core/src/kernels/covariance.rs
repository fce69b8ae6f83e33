use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Llt;
use faer::{Accum, Mat, MatRef, Par, Side};
use rayon::prelude::*;

use super::{Hyperparameters, KernelError};
use crate::parallel::{clear_upper_vector_state, flush_subnormals};

pub const JITTER_SCALE: f64 = 1e-8;
pub const MAX_JITTER_ESCALATIONS: u32 = 4;

/// Smoothing kernel `S_qr exp(-½ xᵀ P_qr x)` with `P_qr = diag(1/ℓ_qr²)`.
pub fn smoothing_kernel(hp: &Hyperparameters, q: usize, r: usize, x: &[f64]) -> f64 {
    let quad: f64 = x
        .iter()
        .zip(hp.log_length_scales_of(q, r))
        .map(|(xi, l)| xi * xi * (-2.0 * l).exp())
        .sum();
    hp.sensitivity(q, r) * (-0.5 * quad).exp()
}

fn pair_amplitude(la: &[f64], lb: &[f64]) -> (f64, Vec<f64>) {
    let mut log_coef = 0.0;
    let mut inv_sum = Vec::with_capacity(la.len());
    for (a, b) in la.iter().zip(lb) {
        let s = a * a + b * b;
        log_coef += 0.5 * (2.0 * a * b / s).ln();
        inv_sum.push(1.0 / s);
    }
    (log_coef.exp(), inv_sum)
}

fn unit_value(coef: f64, inv_sum: &[f64], x: &[f64], x2: &[f64]) -> f64 {
    let quad: f64 = x
        .iter()
        .zip(x2)
        .zip(inv_sum)
        .map(|((a, b), w)| (a - b) * (a - b) * w)
        .sum();
    coef * (-0.5 * quad).exp()
}

/// Noise-free covariance between output `q` at `x` and output `s` at `x2`,
/// i.e. the closed form of the convolution of the two smoothing kernels
/// against every shared white-noise latent (plus the private latent of `q`
/// when `q == s` and private kernels are enabled).
pub fn cross_covariance(hp: &Hyperparameters, q: usize, s: usize, x: &[f64], x2: &[f64]) -> f64 {
    let mut total = 0.0;
    for r in 0..hp.latents() {
        let amp = hp.latent_variance(r) * hp.scaled_sensitivity(q, r) * hp.scaled_sensitivity(s, r);
        if amp == 0.0 {
            continue;
        }
        let (coef, inv) = pair_amplitude(&hp.length_scales(q, r), &hp.length_scales(s, r));
        total += amp * unit_value(coef, &inv, x, x2);
    }
    if q == s {
        if let Some(p) = &hp.private {
            let ls = hp.private_length_scales(q).unwrap_or_default();
            let (coef, inv) = pair_amplitude(&ls, &ls);
            total += p.sensitivities[q].powi(2) * unit_value(coef, &inv, x, x2);
        }
    }
    total
}

/// Squared scaled distance beyond which `exp(-d2 / 2)` is below 1e-280.
const UNDERFLOW_D2: f64 = 1290.0;

/// Unit-amplitude cross block between two input sets for smoothing kernels
/// with length-scales `la` and `lb`:
/// `Π_d sqrt(2 la lb / (la² + lb²)) · exp(-½ Σ_d Δ_d² / (la_d² + lb_d²))`.
///
/// With `same` set, `xa` and `xb` must be the same point set; the block is
/// then returned exactly symmetric with an exact diagonal.
pub fn unit_block(xa: MatRef<'_, f64>, xb: MatRef<'_, f64>, la: &[f64], lb: &[f64], same: bool) -> Mat<f64> {
    let (coef, inv) = pair_amplitude(la, lb);
    let d = la.len();
    let w: Vec<f64> = inv.iter().map(|v| v.sqrt()).collect();
    let za = Mat::from_fn(xa.nrows(), d, |i, k| xa[(i, k)] * w[k]);
    let zb = Mat::from_fn(xb.nrows(), d, |i, k| xb[(i, k)] * w[k]);
    let na: Vec<f64> = (0..za.nrows()).map(|i| (0..d).map(|k| za[(i, k)].powi(2)).sum()).collect();
    let nb: Vec<f64> = (0..zb.nrows()).map(|i| (0..d).map(|k| zb[(i, k)].powi(2)).sum()).collect();
    let mut g = Mat::<f64>::zeros(za.nrows(), zb.nrows());
    matmul(g.as_mut(), Accum::Replace, za.as_ref(), zb.transpose(), 1.0, Par::Seq);
    clear_upper_vector_state();
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let d2 = (na[i] + nb[j] - 2.0 * g[(i, j)]).max(0.0);
            // Far pairs are zeroed rather than left subnormal: subnormal
            // operands slow every later product by orders of magnitude.
            g[(i, j)] = if d2 < UNDERFLOW_D2 { coef * (-0.5 * d2).exp() } else { 0.0 };
        }
    }
    if same {
        for j in 0..g.ncols() {
            g[(j, j)] = coef;
            for i in 0..j {
                g[(i, j)] = g[(j, i)];
            }
        }
    }
    g
}

/// Noise-free covariance block between output `q` at `xa` and output `s` at
/// `xb`.
pub fn covariance_block(
    hp: &Hyperparameters,
    q: usize,
    s: usize,
    xa: MatRef<'_, f64>,
    xb: MatRef<'_, f64>,
    same: bool,
) -> Mat<f64> {
    let mut block = Mat::<f64>::zeros(xa.nrows(), xb.nrows());
    for r in 0..hp.latents() {
        let amp = hp.latent_variance(r) * hp.scaled_sensitivity(q, r) * hp.scaled_sensitivity(s, r);
        if amp == 0.0 {
            continue;
        }
        let e = unit_block(xa, xb, &hp.length_scales(q, r), &hp.length_scales(s, r), same);
        block += e * faer::Scale(amp);
    }
    if q == s {
        if let Some(p) = &hp.private {
            let amp = p.sensitivities[q].powi(2);
            if amp != 0.0 {
                let ls = hp.private_length_scales(q).unwrap_or_default();
                block += unit_block(xa, xb, &ls, &ls, same) * faer::Scale(amp);
            }
        }
    }
    block
}

/// Row offsets of each output's block in the stacked ordering.
pub fn block_offsets(xs: &[Mat<f64>]) -> Vec<usize> {
    let mut off = Vec::with_capacity(xs.len() + 1);
    let mut acc = 0;
    off.push(0);
    for x in xs {
        acc += x.nrows();
        off.push(acc);
    }
    off
}

pub fn check_inputs(hp: &Hyperparameters, xs: &[Mat<f64>]) -> Result<(), KernelError> {
    hp.validate()?;
    if xs.len() != hp.outputs() {
        return Err(KernelError::DimensionMismatch(format!(
            "{} input sets for {} outputs",
            xs.len(),
            hp.outputs()
        )));
    }
    for (q, x) in xs.iter().enumerate() {
        if x.nrows() == 0 {
            return Err(KernelError::DimensionMismatch(format!("output {q} has no data")));
        }
        if x.ncols() != hp.dim() {
            return Err(KernelError::DimensionMismatch(format!(
                "output {q} inputs have {} columns, expected {}",
                x.ncols(),
                hp.dim()
            )));
        }
    }
    Ok(())
}

/// Noise-free joint covariance of all outputs at their training inputs,
/// stacked output by output.
pub fn assemble_noise_free(hp: &Hyperparameters, xs: &[Mat<f64>]) -> Result<Mat<f64>, KernelError> {
    flush_subnormals();
    check_inputs(hp, xs)?;
    let off = block_offsets(xs);
    let n = off[xs.len()];
    let pairs: Vec<(usize, usize)> = (0..xs.len())
        .flat_map(|q| (0..=q).map(move |s| (q, s)))
        .collect();
    let blocks: Vec<Mat<f64>> = pairs
        .par_iter()
        .map(|&(q, s)| covariance_block(hp, q, s, xs[q].as_ref(), xs[s].as_ref(), q == s))
        .collect();
    let mut k = Mat::<f64>::zeros(n, n);
    for (&(q, s), b) in pairs.iter().zip(&blocks) {
        k.submatrix_mut(off[q], off[s], b.nrows(), b.ncols()).copy_from(b);
        if q != s {
            k.submatrix_mut(off[s], off[q], b.ncols(), b.nrows())
                .copy_from(b.transpose());
        }
    }
    Ok(k)
}

fn add_noise(k: &mut Mat<f64>, hp: &Hyperparameters, xs: &[Mat<f64>]) {
    let off = block_offsets(xs);
    for q in 0..xs.len() {
        let v = hp.noise_variance(q);
        for i in off[q]..off[q + 1] {
            k[(i, i)] += v;
        }
    }
}

fn mean_diagonal(k: &Mat<f64>) -> f64 {
    (0..k.nrows()).map(|i| k[(i, i)]).sum::<f64>() / k.nrows() as f64
}

/// Noisy covariance with the base jitter `1e-8 · mean(diag)` on the diagonal.
pub fn assemble_full_covariance(hp: &Hyperparameters, xs: &[Mat<f64>]) -> Result<Mat<f64>, KernelError> {
    let mut k = assemble_noise_free(hp, xs)?;
    add_noise(&mut k, hp, xs);
    let jitter = JITTER_SCALE * mean_diagonal(&k);
    for i in 0..k.nrows() {
        k[(i, i)] += jitter;
    }
    Ok(k)
}

/// Cholesky factor of a noisy covariance together with the jitter that made
/// it factorizable.
pub struct CovarianceFactor {
    pub llt: Llt<f64>,
    /// Diagonal jitter added before factorization.
    pub jitter: f64,
    /// Number of ×10 escalations beyond the base jitter.
    pub level: u32,
}

impl std::fmt::Debug for CovarianceFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CovarianceFactor")
            .field("dim", &self.llt.L().nrows())
            .field("jitter", &self.jitter)
            .field("level", &self.level)
            .finish()
    }
}

impl CovarianceFactor {
    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.l();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Factor a covariance that already carries its noise terms, adding jitter
/// `1e-8 · mean(diag)` and escalating it ×10 up to four times on failure.
pub fn factorize(mut k: Mat<f64>) -> Result<CovarianceFactor, KernelError> {
    flush_subnormals();
    if k.nrows() == 0 || k.nrows() != k.ncols() {
        return Err(KernelError::DimensionMismatch("covariance must be square and non-empty".into()));
    }
    let base = JITTER_SCALE * mean_diagonal(&k);
    if !(base.is_finite() && base > 0.0) {
        return Err(KernelError::NotPositiveDefinite { level: 0 });
    }
    let mut applied = 0.0;
    for level in 0..=MAX_JITTER_ESCALATIONS {
        let jitter = base * 10f64.powi(level as i32);
        for i in 0..k.nrows() {
            k[(i, i)] += jitter - applied;
        }
        applied = jitter;
        let result = k.llt(Side::Lower);
        clear_upper_vector_state();
        if let Ok(llt) = result {
            return Ok(CovarianceFactor { llt, jitter, level });
        }
    }
    Err(KernelError::NotPositiveDefinite {
        level: MAX_JITTER_ESCALATIONS,
    })
}

/// Assemble the noisy training covariance and factor it.
pub fn factorize_covariance(hp: &Hyperparameters, xs: &[Mat<f64>]) -> Result<CovarianceFactor, KernelError> {
    let mut k = assemble_noise_free(hp, xs)?;
    add_noise(&mut k, hp, xs);
    factorize(k)
}

/// Noise-free covariance between every output at each row of `query` and
/// the stacked training outputs. Row `q * M + m` holds output `q` at query
/// point `m`.
pub fn query_covariance(
    hp: &Hyperparameters,
    query: MatRef<'_, f64>,
    xs: &[Mat<f64>],
) -> Mat<f64> {
    flush_subnormals();
    let m = query.nrows();
    let off = block_offsets(xs);
    let mut out = Mat::<f64>::zeros(hp.outputs() * m, off[xs.len()]);
    for q in 0..hp.outputs() {
        for (s, x) in xs.iter().enumerate() {
            let b = covariance_block(hp, q, s, query, x.as_ref(), false);
            out.submatrix_mut(q * m, off[s], m, x.nrows()).copy_from(&b);
        }
    }
    out
}
