//! Empirical checks of the two continuity properties the certificates
//! rely on.

use crate::error::{Error, Result};
use crate::math::matrix::dist;
use crate::math::{Matrix, Rng};
use crate::vae::VaeModel;

/// Worst observed ratio `K_θ W2(q(·|x1), q(·|x2)) / ‖x1 − x2‖` against its
/// ceiling `K_θ K_φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityReport {
    pub max_ratio: f64,
    pub bound: f64,
    pub pairs: usize,
}

impl ContinuityReport {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.max_ratio <= self.bound * (1.0 + rel_tol)
    }
}

/// The W2 distance between two diagonal Gaussian posteriors is the
/// Euclidean distance of their `[μ; σ]` vectors, so this is a pair check on
/// the encoder scaled by `K_θ`.
pub fn posterior_continuity_check(model: &VaeModel, a: &Matrix, b: &Matrix) -> Result<ContinuityReport> {
    let eff = model.effective()?;
    let r = crate::net::max_pair_ratio(a, b, |m| eff.posterior_params(m))?;
    Ok(ContinuityReport {
        max_ratio: model.k_theta() * r,
        bound: model.k_theta() * model.k_phi(),
        pairs: a.rows(),
    })
}

/// One `(x1, x2, x)` triple of the expected-loss continuity check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossContinuity {
    /// Monte-Carlo estimate of `|E_{q(·|x1)} ℓ(z, x) − E_{q(·|x2)} ℓ(z, x)|`.
    pub gap: f64,
    /// Standard error of the signed difference.
    pub std_err: f64,
    /// `K_φ K_θ ‖x1 − x2‖`.
    pub bound: f64,
}

impl LossContinuity {
    pub fn holds(&self, n_se: f64) -> bool {
        self.gap <= self.bound + n_se * self.std_err
    }
}

/// Estimates the expected-loss gap with common random numbers: both
/// posteriors are sampled from the same standard normal draws, which keeps
/// the variance of the difference small.
pub fn loss_continuity_check(
    model: &VaeModel,
    x1: &[f64],
    x2: &[f64],
    x: &[f64],
    draws: usize,
    rng: &mut Rng,
) -> Result<LossContinuity> {
    if draws < 2 {
        return Err(Error::contract("at least two draws are needed for a standard error"));
    }
    let eff = model.effective()?;
    let p1 = eff.encode(x1)?;
    let p2 = eff.encode(x2)?;
    let d = model.latent_dim;
    let eps = Matrix::from_vec(draws, d, rng.gaussian(draws * d))?;
    let mut z1 = Matrix::zeros(draws, d);
    let mut z2 = Matrix::zeros(draws, d);
    for r in 0..draws {
        for j in 0..d {
            z1.set(r, j, p1.mu[j] + p1.sigma[j] * eps.get(r, j));
            z2.set(r, j, p2.mu[j] + p2.sigma[j] * eps.get(r, j));
        }
    }
    let target = Matrix::from_vec(draws, x.len(), x.repeat(draws))?;
    let l1 = eff.rec_rmse_rows(&z1, &target)?;
    let l2 = eff.rec_rmse_rows(&z2, &target)?;
    let diffs: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a - b).collect();
    let n = draws as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(LossContinuity {
        gap: mean.abs(),
        std_err: (var / n).sqrt(),
        bound: model.k_phi() * model.k_theta() * dist(x1, x2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::VaeSpec;

    fn model(seed: u64) -> VaeModel {
        let mut rng = Rng::new(seed);
        let mut m = VaeModel::new(&VaeSpec { hidden: vec![8, 8], ..VaeSpec::standard(2, 2) }, &mut rng).unwrap();
        for p in m.params_mut() {
            let n = rng.gaussian(p.len());
            p.as_mut_slice().iter_mut().zip(n).for_each(|(v, e)| *v += 0.3 * e);
        }
        m
    }

    #[test]
    fn posterior_continuity_on_random_pairs() {
        let m = model(1);
        let mut rng = Rng::new(2);
        let a = Matrix::from_vec(5000, 2, rng.gaussian(10_000)).unwrap();
        let b = Matrix::from_vec(5000, 2, rng.gaussian(10_000)).unwrap();
        let rep = posterior_continuity_check(&m, &a, &b).unwrap();
        assert_eq!(rep.bound, 4.0);
        assert!(rep.holds(1e-6), "{rep:?}");
        assert!(rep.max_ratio > 0.0);
    }

    #[test]
    fn loss_continuity_holds_within_three_errors() {
        let m = model(3);
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let (x1, x2, x) = (rng.gaussian(2), rng.gaussian(2), rng.gaussian(2));
            let c = loss_continuity_check(&m, &x1, &x2, &x, 2000, &mut rng).unwrap();
            assert!(c.holds(3.0), "{c:?}");
        }
    }

    #[test]
    fn identical_inputs_give_zero_gap() {
        let m = model(5);
        let c = loss_continuity_check(&m, &[0.2, 0.1], &[0.2, 0.1], &[1.0, -1.0], 10, &mut Rng::new(6)).unwrap();
        assert_eq!(c.gap, 0.0);
        assert_eq!(c.bound, 0.0);
    }
}
