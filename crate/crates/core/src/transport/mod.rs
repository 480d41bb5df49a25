//! Wasserstein distances and the regenerated/generated samplers.

pub mod assignment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::matrix::dist;
use crate::math::{Matrix, Rng};
use crate::vae::VaeModel;

/// Largest sample size the exact solver accepts.
pub const MAX_ASSIGNMENT_SIZE: usize = 4096;

/// Rows pushed through a network at once by the samplers.
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportEstimate {
    pub value: f64,
    pub sample_size_a: usize,
    pub sample_size_b: usize,
    pub solver: String,
    /// Seed of the sampling that produced the inputs, when known.
    pub seed: Option<u64>,
}

impl TransportEstimate {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Closed-form W2 between `N(μ₁, diag σ₁²)` and `N(μ₂, diag σ₂²)`.
pub fn w2_diag_gaussian(mu1: &[f64], sigma1: &[f64], mu2: &[f64], sigma2: &[f64]) -> Result<f64> {
    let d = mu1.len();
    if sigma1.len() != d || mu2.len() != d || sigma2.len() != d {
        return Err(Error::dim(
            "w2_diag_gaussian",
            format!("lengths {}, {}, {}, {}", d, sigma1.len(), mu2.len(), sigma2.len()),
        ));
    }
    if let Some(s) = sigma1.iter().chain(sigma2).find(|s| !(**s >= 0.0)) {
        return Err(Error::contract(format!("standard deviations must be nonnegative, got {s}")));
    }
    let dm: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    let ds: f64 = sigma1.iter().zip(sigma2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((dm + ds).sqrt())
}

fn check_samples(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::contract(format!("sample sizes differ: {} vs {}", a.rows(), b.rows())));
    }
    if a.cols() != b.cols() {
        return Err(Error::dim("transport", format!("dimensions differ: {} vs {}", a.cols(), b.cols())));
    }
    if a.rows() > MAX_ASSIGNMENT_SIZE {
        return Err(Error::Budget { requested: a.rows(), budget: MAX_ASSIGNMENT_SIZE });
    }
    if a.rows() == 0 {
        return Err(Error::contract("empty samples"));
    }
    Ok(())
}

/// Optimal permutation for the cost `c(a_i, b_j)` and its mean cost.
pub fn optimal_matching(a: &Matrix, b: &Matrix, c: impl Fn(&[f64], &[f64]) -> f64) -> Result<(Vec<usize>, f64)> {
    check_samples(a, b)?;
    let m = a.rows();
    let mut cost = Vec::with_capacity(m * m);
    for i in 0..m {
        let ai = a.row(i);
        cost.extend((0..m).map(|j| c(ai, b.row(j))));
    }
    let perm = assignment::solve(m, &cost)?;
    let mean = perm.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum::<f64>() / m as f64;
    Ok((perm, mean))
}

/// Exact W1 between two uniform empirical measures of equal size.
pub fn w1_empirical(a: &Matrix, b: &Matrix) -> Result<TransportEstimate> {
    let (_, value) = optimal_matching(a, b, dist)?;
    Ok(TransportEstimate {
        value: value.max(0.0),
        sample_size_a: a.rows(),
        sample_size_b: b.rows(),
        solver: assignment::SOLVER_ID.to_string(),
        seed: None,
    })
}

/// Exact W2 between two uniform empirical measures of equal size.
pub fn w2_empirical(a: &Matrix, b: &Matrix) -> Result<f64> {
    let (_, value) = optimal_matching(a, b, |x, y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum())?;
    Ok(value.max(0.0).sqrt())
}

/// `m` draws from the regenerated distribution: a uniform training index
/// `i`, then `z ~ q_φ(·|x_i)`, then `g_θ(z)`.
pub fn sample_regenerated(model: &VaeModel, data: &Matrix, rng: &mut Rng, m: usize) -> Result<Matrix> {
    if data.rows() == 0 {
        return Err(Error::contract("cannot regenerate from an empty dataset"));
    }
    let eff = model.effective()?;
    let d = model.latent_dim;
    let mut blocks = Vec::new();
    let mut done = 0;
    while done < m {
        let k = CHUNK.min(m - done);
        let idx: Vec<usize> = (0..k).map(|_| rng.index(data.rows())).collect();
        let eps = rng.gaussian(k * d);
        let (mu, sigma) = eff.encode_batch(&data.select_rows(&idx))?;
        let mut z = Matrix::zeros(k, d);
        for (t, zv) in z.as_mut_slice().iter_mut().enumerate() {
            *zv = mu.as_slice()[t] + sigma.as_slice()[t] * eps[t];
        }
        blocks.push(eff.decode_batch(&z)?);
        done += k;
    }
    if blocks.is_empty() {
        return Ok(Matrix::zeros(0, model.data_dim));
    }
    Matrix::vstack(&blocks)
}

/// `m` draws of `g_θ(z)` with `z ~ N(0, I)`.
pub fn sample_generated(model: &VaeModel, rng: &mut Rng, m: usize) -> Result<Matrix> {
    let eff = model.effective()?;
    let d = model.latent_dim;
    let mut blocks = Vec::new();
    let mut done = 0;
    while done < m {
        let k = CHUNK.min(m - done);
        let z = Matrix::from_vec(k, d, rng.gaussian(k * d))?;
        blocks.push(eff.decode_batch(&z)?);
        done += k;
    }
    if blocks.is_empty() {
        return Ok(Matrix::zeros(0, model.data_dim));
    }
    Matrix::vstack(&blocks)
}
