use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::KernelError;

pub const HYPERPARAMETER_SCHEMA_VERSION: u32 = 1;

/// Per-output private smoothing kernels, each driven by its own unit-variance
/// white-noise latent.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateKernels {
    /// Scaled sensitivities, one per output.
    pub sensitivities: Vec<f64>,
    /// `Q x D`, row-major.
    pub log_length_scales: Vec<f64>,
}

/// Free parameters of the convolved multi-output covariance.
///
/// Sensitivities are stored scaled: `Ŝ = S · π^{D/4} · Π_d ℓ_d^{1/2}`, which
/// makes the prior variance of output `q` equal to `Σ_r σ_r² Ŝ_qr²` and keeps
/// the optimizer well scaled in high dimension. Use [`Self::sensitivity`] for
/// the raw amplitude of the smoothing kernel.
///
/// Layouts: sensitivities are `Q x R` row-major, length-scales `Q x R x D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HyperparametersDocument", into = "HyperparametersDocument")]
pub struct Hyperparameters {
    outputs: usize,
    latents: usize,
    dim: usize,
    pub sensitivities: Vec<f64>,
    pub log_length_scales: Vec<f64>,
    pub log_latent_variances: Vec<f64>,
    pub log_noise_variances: Vec<f64>,
    pub private: Option<PrivateKernels>,
}

impl Hyperparameters {
    /// Unit sensitivities, unit length-scales and latent variances, noise
    /// variance `e^-3`.
    pub fn new(outputs: usize, latents: usize, dim: usize, private: bool) -> Self {
        Self {
            outputs,
            latents,
            dim,
            sensitivities: vec![1.0; outputs * latents],
            log_length_scales: vec![0.0; outputs * latents * dim],
            log_latent_variances: vec![0.0; latents],
            log_noise_variances: vec![-3.0; outputs],
            private: private.then(|| PrivateKernels {
                sensitivities: vec![1.0; outputs],
                log_length_scales: vec![0.0; outputs * dim],
            }),
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn latents(&self) -> usize {
        self.latents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_private(&self) -> bool {
        self.private.is_some()
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let (q, r, d) = (self.outputs, self.latents, self.dim);
        let bad = |m: String| Err(KernelError::InvalidHyperparameters(m));
        if q == 0 || r == 0 || d == 0 {
            return bad(format!("dimensions must be positive (Q = {q}, R = {r}, D = {d})"));
        }
        if self.sensitivities.len() != q * r
            || self.log_length_scales.len() != q * r * d
            || self.log_latent_variances.len() != r
            || self.log_noise_variances.len() != q
        {
            return bad("parameter array lengths do not match Q, R, D".into());
        }
        if let Some(p) = &self.private {
            if p.sensitivities.len() != q || p.log_length_scales.len() != q * d {
                return bad("private kernel arrays do not match Q, D".into());
            }
        }
        if !self.to_vector().iter().all(|v| v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        let (q, r, d) = (self.outputs, self.latents, self.dim);
        q * r + q * r * d + r + q + if self.private.is_some() { q + q * d } else { 0 }
    }

    /// Position of the noise log-variances in the flat parameter vector.
    pub fn noise_offset(&self) -> usize {
        let (q, r, d) = (self.outputs, self.latents, self.dim);
        q * r + q * r * d + r
    }

    /// Flat parameter vector in optimizer order: scaled sensitivities,
    /// log length-scales, log latent variances, log noise variances, then the
    /// private sensitivities and log length-scales when present.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.sensitivities);
        v.extend_from_slice(&self.log_length_scales);
        v.extend_from_slice(&self.log_latent_variances);
        v.extend_from_slice(&self.log_noise_variances);
        if let Some(p) = &self.private {
            v.extend_from_slice(&p.sensitivities);
            v.extend_from_slice(&p.log_length_scales);
        }
        v
    }

    pub fn set_from_vector(&mut self, v: &[f64]) -> Result<(), KernelError> {
        if v.len() != self.n_params() {
            return Err(KernelError::InvalidHyperparameters(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                v.len()
            )));
        }
        let mut rest = v;
        let mut take = |dst: &mut Vec<f64>| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.sensitivities);
        take(&mut self.log_length_scales);
        take(&mut self.log_latent_variances);
        take(&mut self.log_noise_variances);
        if let Some(p) = &mut self.private {
            take(&mut p.sensitivities);
            take(&mut p.log_length_scales);
        }
        Ok(())
    }

    pub fn from_vector(template: &Self, v: &[f64]) -> Result<Self, KernelError> {
        let mut hp = template.clone();
        hp.set_from_vector(v)?;
        Ok(hp)
    }

    /// Human-readable names in [`Self::to_vector`] order.
    pub fn param_names(&self) -> Vec<String> {
        let (q, r, d) = (self.outputs, self.latents, self.dim);
        let mut names = Vec::with_capacity(self.n_params());
        for i in 0..q {
            for j in 0..r {
                names.push(format!("sensitivity[{i},{j}]"));
            }
        }
        for i in 0..q {
            for j in 0..r {
                for k in 0..d {
                    names.push(format!("log_length_scale[{i},{j},{k}]"));
                }
            }
        }
        names.extend((0..r).map(|j| format!("log_latent_variance[{j}]")));
        names.extend((0..q).map(|i| format!("log_noise_variance[{i}]")));
        if self.private.is_some() {
            names.extend((0..q).map(|i| format!("private_sensitivity[{i}]")));
            for i in 0..q {
                names.extend((0..d).map(|k| format!("private_log_length_scale[{i},{k}]")));
            }
        }
        names
    }

    pub fn scaled_sensitivity(&self, q: usize, r: usize) -> f64 {
        self.sensitivities[q * self.latents + r]
    }

    pub fn log_length_scales_of(&self, q: usize, r: usize) -> &[f64] {
        let start = (q * self.latents + r) * self.dim;
        &self.log_length_scales[start..start + self.dim]
    }

    pub fn length_scales(&self, q: usize, r: usize) -> Vec<f64> {
        self.log_length_scales_of(q, r).iter().map(|l| l.exp()).collect()
    }

    fn sensitivity_scale(&self, log_ls: &[f64]) -> f64 {
        (0.25 * self.dim as f64 * PI.ln() + 0.5 * log_ls.iter().sum::<f64>()).exp()
    }

    /// Raw amplitude `S_qr` of the smoothing kernel.
    pub fn sensitivity(&self, q: usize, r: usize) -> f64 {
        self.scaled_sensitivity(q, r) / self.sensitivity_scale(self.log_length_scales_of(q, r))
    }

    /// Set the raw amplitude `S_qr`, using the current length-scales.
    pub fn set_sensitivity(&mut self, q: usize, r: usize, raw: f64) {
        let scale = self.sensitivity_scale(self.log_length_scales_of(q, r));
        self.sensitivities[q * self.latents + r] = raw * scale;
    }

    pub fn set_length_scales(&mut self, q: usize, r: usize, ls: &[f64]) {
        let start = (q * self.latents + r) * self.dim;
        for (dst, l) in self.log_length_scales[start..start + self.dim].iter_mut().zip(ls) {
            *dst = l.ln();
        }
    }

    pub fn latent_variance(&self, r: usize) -> f64 {
        self.log_latent_variances[r].exp()
    }

    pub fn noise_variance(&self, q: usize) -> f64 {
        self.log_noise_variances[q].exp()
    }

    pub fn set_noise_variance(&mut self, q: usize, v: f64) {
        self.log_noise_variances[q] = v.ln();
    }

    /// Raw amplitude of the private kernel of output `q`, if present.
    pub fn private_sensitivity(&self, q: usize) -> Option<f64> {
        let p = self.private.as_ref()?;
        let d = self.dim;
        Some(p.sensitivities[q] / self.sensitivity_scale(&p.log_length_scales[q * d..(q + 1) * d]))
    }

    pub fn private_length_scales(&self, q: usize) -> Option<Vec<f64>> {
        let p = self.private.as_ref()?;
        let d = self.dim;
        Some(p.log_length_scales[q * d..(q + 1) * d].iter().map(|l| l.exp()).collect())
    }

    /// Noise-free prior variance of output `q` at any input.
    pub fn prior_variance(&self, q: usize) -> f64 {
        let shared: f64 = (0..self.latents)
            .map(|r| self.latent_variance(r) * self.scaled_sensitivity(q, r).powi(2))
            .sum();
        let private = self
            .private
            .as_ref()
            .map_or(0.0, |p| p.sensitivities[q].powi(2));
        shared + private
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hyperparameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        serde_json::from_str(text).map_err(|e| KernelError::Json(e.to_string()))
    }
}

/// On-disk form. Fields prefixed `log_` hold natural logarithms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparametersDocument {
    pub schema_version: u32,
    pub outputs: usize,
    pub latents: usize,
    pub dim: usize,
    /// `[q][r]`, scaled.
    pub scaled_sensitivities: Vec<Vec<f64>>,
    /// `[q][r][d]`
    pub log_length_scales: Vec<Vec<Vec<f64>>>,
    pub log_latent_variances: Vec<f64>,
    pub log_noise_variances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private: Option<PrivateDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateDocument {
    pub scaled_sensitivities: Vec<f64>,
    /// `[q][d]`
    pub log_length_scales: Vec<Vec<f64>>,
}

impl From<Hyperparameters> for HyperparametersDocument {
    fn from(hp: Hyperparameters) -> Self {
        let (q, r, d) = (hp.outputs, hp.latents, hp.dim);
        Self {
            schema_version: HYPERPARAMETER_SCHEMA_VERSION,
            outputs: q,
            latents: r,
            dim: d,
            scaled_sensitivities: hp.sensitivities.chunks(r).map(|c| c.to_vec()).collect(),
            log_length_scales: hp
                .log_length_scales
                .chunks(r * d)
                .map(|per_q| per_q.chunks(d).map(|c| c.to_vec()).collect())
                .collect(),
            log_latent_variances: hp.log_latent_variances,
            log_noise_variances: hp.log_noise_variances,
            private: hp.private.map(|p| PrivateDocument {
                scaled_sensitivities: p.sensitivities,
                log_length_scales: p.log_length_scales.chunks(d).map(|c| c.to_vec()).collect(),
            }),
        }
    }
}

impl TryFrom<HyperparametersDocument> for Hyperparameters {
    type Error = KernelError;

    fn try_from(doc: HyperparametersDocument) -> Result<Self, Self::Error> {
        if doc.schema_version != HYPERPARAMETER_SCHEMA_VERSION {
            return Err(KernelError::SchemaVersion {
                found: doc.schema_version,
                expected: HYPERPARAMETER_SCHEMA_VERSION,
            });
        }
        let hp = Self {
            outputs: doc.outputs,
            latents: doc.latents,
            dim: doc.dim,
            sensitivities: doc.scaled_sensitivities.concat(),
            log_length_scales: doc.log_length_scales.concat().concat(),
            log_latent_variances: doc.log_latent_variances,
            log_noise_variances: doc.log_noise_variances,
            private: doc.private.map(|p| PrivateKernels {
                sensitivities: p.scaled_sensitivities,
                log_length_scales: p.log_length_scales.concat(),
            }),
        };
        hp.validate()?;
        Ok(hp)
    }
}
