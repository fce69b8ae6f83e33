use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::DenseSolveCore;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, MatRef, Par};

use super::MogpError;
use crate::kernels::{block_offsets, check_inputs, factorize_covariance, unit_block, CovarianceFactor, Hyperparameters, JITTER_SCALE};
use crate::parallel::{clear_upper_vector_state, flush_subnormals, par};

/// `K⁻¹ y` from a Cholesky factor by two triangular solves.
pub fn solve_with_factor(factor: &CovarianceFactor, y: &[f64]) -> Vec<f64> {
    let l = factor.l();
    let mut rhs = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    solve_lower_triangular_in_place(l, rhs.as_mut(), par());
    solve_upper_triangular_in_place(l.transpose(), rhs.as_mut(), par());
    clear_upper_vector_state();
    (0..y.len()).map(|i| rhs[(i, 0)]).collect()
}

fn check_targets(xs: &[Mat<f64>], y: &[f64]) -> Result<(), MogpError> {
    let n = block_offsets(xs)[xs.len()];
    if y.len() != n {
        return Err(MogpError::DimensionMismatch(format!(
            "{} targets for {n} stacked inputs",
            y.len()
        )));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(MogpError::DimensionMismatch("non-finite target".into()));
    }
    Ok(())
}

fn lml_from_factor(factor: &CovarianceFactor, y: &[f64], alpha: &[f64]) -> f64 {
    let fit: f64 = y.iter().zip(alpha).map(|(a, b)| a * b).sum();
    -0.5 * factor.log_det() - 0.5 * fit - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

/// Log marginal likelihood of the stacked targets `y` (output by output,
/// matching `xs`) under the noisy joint covariance.
pub fn log_marginal_likelihood(hp: &Hyperparameters, xs: &[Mat<f64>], y: &[f64]) -> Result<f64, MogpError> {
    flush_subnormals();
    check_inputs(hp, xs)?;
    check_targets(xs, y)?;
    let factor = factorize_covariance(hp, xs)?;
    let alpha = solve_with_factor(&factor, y);
    Ok(lml_from_factor(&factor, y, &alpha))
}

/// Gradient of the log marginal likelihood with respect to the parameter
/// vector of [`Hyperparameters::to_vector`].
pub fn likelihood_gradient(hp: &Hyperparameters, xs: &[Mat<f64>], y: &[f64]) -> Result<Vec<f64>, MogpError> {
    Ok(likelihood_and_gradient(hp, xs, y)?.1)
}

/// Sums over `G = W ∘ E` needed by every length-scale and amplitude
/// derivative of one block: `(Σ G, t)` with
/// `t_d = Σ_ij G_ij (xa_id - xb_jd)²`.
fn weighted_sums(w: MatRef<'_, f64>, e: &Mat<f64>, xa: MatRef<'_, f64>, xb: MatRef<'_, f64>) -> (f64, Vec<f64>) {
    let (na, nb, d) = (xa.nrows(), xb.nrows(), xa.ncols());
    let mut g = Mat::<f64>::zeros(na, nb);
    let mut rs = vec![0.0; na];
    let mut cs = vec![0.0; nb];
    let mut total = 0.0;
    for j in 0..nb {
        for i in 0..na {
            let v = w[(i, j)] * e[(i, j)];
            g[(i, j)] = v;
            rs[i] += v;
            cs[j] += v;
        }
        total += cs[j];
    }
    let mut gx = Mat::<f64>::zeros(na, d);
    matmul(gx.as_mut(), Accum::Replace, g.as_ref(), xb, 1.0, Par::Seq);
    clear_upper_vector_state();
    let t = (0..d)
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..na {
                let x = xa[(i, k)];
                acc += rs[i] * x * x - 2.0 * x * gx[(i, k)];
            }
            for j in 0..nb {
                let x = xb[(j, k)];
                acc += cs[j] * x * x;
            }
            acc
        })
        .collect();
    (total, t)
}

/// Log marginal likelihood together with its gradient. The jitter scales with
/// the mean diagonal, so it is differentiated along with the kernel.
pub fn likelihood_and_gradient(
    hp: &Hyperparameters,
    xs: &[Mat<f64>],
    y: &[f64],
) -> Result<(f64, Vec<f64>), MogpError> {
    flush_subnormals();
    check_inputs(hp, xs)?;
    check_targets(xs, y)?;
    let factor = factorize_covariance(hp, xs)?;
    let alpha = solve_with_factor(&factor, y);
    let value = lml_from_factor(&factor, y, &alpha);
    let kinv = factor.llt.inverse();
    clear_upper_vector_state();

    let (nq, nr, nd) = (hp.outputs(), hp.latents(), hp.dim());
    let off = block_offsets(xs);
    // W = α αᵀ - K⁻¹, so that dL/dθ = ½ Σ_ij W_ij dK_ij/dθ.
    let w = Mat::from_fn(kinv.nrows(), kinv.ncols(), |i, j| alpha[i] * alpha[j] - kinv[(i, j)]);

    let n_shared = nq * nr + nq * nr * nd + nr + nq;
    let mut grad = vec![0.0; hp.n_params()];
    let (sens_at, ls_at, lat_at, noise_at) = (0, nq * nr, nq * nr + nq * nr * nd, nq * nr + nq * nr * nd + nr);
    let ls_index = |q: usize, r: usize, k: usize| ls_at + (q * nr + r) * nd + k;

    for q in 0..nq {
        for s in 0..=q {
            let wb = w.submatrix(off[q], off[s], xs[q].nrows(), xs[s].nrows());
            for r in 0..nr {
                let sigma2 = hp.latent_variance(r);
                let (sq, ss) = (hp.scaled_sensitivity(q, r), hp.scaled_sensitivity(s, r));
                let lq = hp.length_scales(q, r);
                let ls = hp.length_scales(s, r);
                let e = unit_block(xs[q].as_ref(), xs[s].as_ref(), &lq, &ls, q == s);
                let (g0, t) = weighted_sums(wb, &e, xs[q].as_ref(), xs[s].as_ref());
                let amp = sigma2 * sq * ss;
                if q == s {
                    grad[sens_at + q * nr + r] += sigma2 * sq * g0;
                    grad[lat_at + r] += 0.5 * amp * g0;
                    for k in 0..nd {
                        grad[ls_index(q, r, k)] += amp * t[k] / (4.0 * lq[k] * lq[k]);
                    }
                } else {
                    grad[sens_at + q * nr + r] += sigma2 * ss * g0;
                    grad[sens_at + s * nr + r] += sigma2 * sq * g0;
                    grad[lat_at + r] += amp * g0;
                    for k in 0..nd {
                        let (a2, b2) = (lq[k] * lq[k], ls[k] * ls[k]);
                        let sum = a2 + b2;
                        grad[ls_index(q, r, k)] += amp * (0.5 * (b2 - a2) / sum * g0 + a2 / (sum * sum) * t[k]);
                        grad[ls_index(s, r, k)] += amp * (0.5 * (a2 - b2) / sum * g0 + b2 / (sum * sum) * t[k]);
                    }
                }
            }
        }
        // Noise: dK/d log σ_w² = σ_w² I on block (q, q).
        let diag: f64 = (off[q]..off[q + 1]).map(|i| w[(i, i)]).sum();
        grad[noise_at + q] = 0.5 * hp.noise_variance(q) * diag;

        if let Some(p) = &hp.private {
            let wb = w.submatrix(off[q], off[q], xs[q].nrows(), xs[q].nrows());
            let lp = hp.private_length_scales(q).unwrap_or_default();
            let e = unit_block(xs[q].as_ref(), xs[q].as_ref(), &lp, &lp, true);
            let (g0, t) = weighted_sums(wb, &e, xs[q].as_ref(), xs[q].as_ref());
            let sp = p.sensitivities[q];
            grad[n_shared + q] = sp * g0;
            for k in 0..nd {
                grad[n_shared + nq + q * nd + k] = sp * sp * t[k] / (4.0 * lp[k] * lp[k]);
            }
        }
    }

    // Jitter c · mean(diag K): adds ½ tr(W) dJ/dθ to every amplitude-like term.
    let c = JITTER_SCALE * 10f64.powi(factor.level as i32);
    let n = off[nq] as f64;
    let half_trw = 0.5 * (0..kinv.nrows()).map(|i| w[(i, i)]).sum::<f64>();
    for q in 0..nq {
        let share = half_trw * c * xs[q].nrows() as f64 / n;
        for r in 0..nr {
            let (sigma2, sq) = (hp.latent_variance(r), hp.scaled_sensitivity(q, r));
            grad[sens_at + q * nr + r] += share * 2.0 * sigma2 * sq;
            grad[lat_at + r] += share * sigma2 * sq * sq;
        }
        grad[noise_at + q] += share * hp.noise_variance(q);
        if let Some(p) = &hp.private {
            grad[n_shared + q] += share * 2.0 * p.sensitivities[q];
        }
    }
    Ok((value, grad))
}
