//! Monte-Carlo estimate of the exponential moment
//! `n · ln E_{z∼p} E_{x∼μ} exp[(λ/n)(E_{x′∼μ} ℓ(z, x′) − ℓ(z, x))]`.
//!
//! Diagnostic only: a plug-in estimate of a population quantity is not a
//! valid certificate term. It exists to check the analytic upper bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::matrix::dist;
use crate::math::{Matrix, Rng};
use crate::vae::VaeModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    /// Prior draws `z`.
    pub z_draws: usize,
    /// Outer data draws per `z`.
    pub outer: usize,
    /// Inner data draws per `z` estimating `E_{x′} ℓ(z, x′)`.
    pub inner: usize,
}

impl MomentConfig {
    pub fn trials(&self) -> usize {
        self.z_draws * self.outer
    }
}

impl Default for MomentConfig {
    fn default() -> Self {
        MomentConfig { z_draws: 200, outer: 64, inner: 1024 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// `n · ln E[...]`, comparable with `λ²Δ²/(8n)` or `λ²K_*²/(2n)`.
    pub raw: f64,
    pub raw_std_err: f64,
    /// `raw / λ`, comparable with the certificate's moment term.
    pub scaled: f64,
    pub scaled_std_err: f64,
    pub trials: usize,
}

/// Estimates the exponential moment for `model`'s decoder against data from
/// `sampler(m, rng)`, which must return `m` fresh rows. The log-mean-exp is
/// taken after subtracting the largest exponent; the standard error comes
/// from the delta method with prior draws as independent clusters.
pub fn mc_exponential_moment(
    model: &VaeModel,
    sampler: &mut dyn FnMut(usize, &mut Rng) -> Result<Matrix>,
    lambda: f64,
    n: usize,
    cfg: &MomentConfig,
    rng: &mut Rng,
) -> Result<MomentEstimate> {
    if cfg.trials() < 10_000 {
        return Err(Error::contract(format!("at least 10^4 trials are required, got {}", cfg.trials())));
    }
    if cfg.z_draws < 2 || cfg.inner == 0 {
        return Err(Error::contract("need at least two prior draws and one inner draw"));
    }
    if !(lambda > 0.0) || n == 0 {
        return Err(Error::contract("lambda and n must be positive"));
    }
    let t = lambda / n as f64;
    let eff = model.effective()?;
    let z = Matrix::from_vec(cfg.z_draws, model.latent_dim, rng.gaussian(cfg.z_draws * model.latent_dim))?;
    let y = eff.decode_batch(&z)?;

    let mut exponents = Vec::with_capacity(cfg.z_draws);
    for j in 0..cfg.z_draws {
        let inner = sampler(cfg.inner, rng)?;
        let outer = sampler(cfg.outer, rng)?;
        if inner.cols() != y.cols() || outer.cols() != y.cols() {
            return Err(Error::dim("mc_exponential_moment", "sampler and decoder dimensions differ"));
        }
        let yj = y.row(j);
        let m_hat = (0..inner.rows()).map(|r| dist(inner.row(r), yj)).sum::<f64>() / inner.rows() as f64;
        let e: Vec<f64> = (0..outer.rows()).map(|r| t * (m_hat - dist(outer.row(r), yj))).collect();
        exponents.push(e);
    }
    let top = exponents.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical("non-finite exponent in the moment estimate".into()));
    }
    // Per-cluster means of exp(e − top); all lie in (0, 1].
    let a: Vec<f64> =
        exponents.iter().map(|e| e.iter().map(|v| (v - top).exp()).sum::<f64>() / e.len() as f64).collect();
    let jf = a.len() as f64;
    let mean = a.iter().sum::<f64>() / jf;
    let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (jf - 1.0);
    let log_e = top + mean.ln();
    let se_log = (var / jf).sqrt() / mean;
    let nf = n as f64;
    Ok(MomentEstimate {
        raw: nf * log_e,
        raw_std_err: nf * se_log,
        scaled: nf * log_e / lambda,
        scaled_std_err: nf * se_log / lambda,
        trials: cfg.trials(),
    })
}
