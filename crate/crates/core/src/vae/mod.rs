//! The VAE: encoder `Q_φ(x) = [μ_φ(x); σ_φ(x)]`, decoder `g_θ`, the
//! Gaussian posterior machinery and the training objective.
//!
//! Training uses the squared reconstruction error; every certificate uses
//! the Euclidean (RMSE-style) loss `‖x − g_θ(z)‖`. The two are kept in
//! separate functions and never mixed.

pub mod checks;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::autodiff::softplus;
use crate::math::matrix::dist;
use crate::math::{Graph, Matrix, Rng, Var};
use crate::net::{EffectiveMlp, LipschitzMlp, MlpSpec, MlpVars};

pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

/// Architecture of both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeSpec {
    pub data_dim: usize,
    pub latent_dim: usize,
    /// Hidden widths shared by encoder and decoder.
    pub hidden: Vec<usize>,
    pub k_phi: f64,
    pub k_theta: f64,
    pub group_size: usize,
    pub bjorck_iterations: usize,
}

impl VaeSpec {
    /// Three hidden layers of width 100, K_φ = K_θ = 2, GroupSort pairs,
    /// 15 Björck steps.
    pub fn standard(data_dim: usize, latent_dim: usize) -> Self {
        VaeSpec {
            data_dim,
            latent_dim,
            hidden: vec![100, 100, 100],
            k_phi: 2.0,
            k_theta: 2.0,
            group_size: 2,
            bjorck_iterations: crate::net::bjorck::DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub encoder: LipschitzMlp,
    pub decoder: LipschitzMlp,
    pub latent_dim: usize,
    pub data_dim: usize,
}

/// Posterior parameters for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl EncoderOutput {
    /// Concatenated `[μ; σ]`, the vector the encoder's constant refers to.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend(&self.sigma);
        v
    }
}

#[derive(Clone, Debug)]
pub struct VaeVars {
    pub encoder: MlpVars,
    pub decoder: MlpVars,
}

/// Orthonormalized networks for repeated batch inference.
#[derive(Clone, Debug)]
pub struct EffectiveVae {
    pub encoder: EffectiveMlp,
    pub decoder: EffectiveMlp,
    pub latent_dim: usize,
}

impl VaeModel {
    pub fn new(spec: &VaeSpec, rng: &mut Rng) -> Result<Self> {
        if spec.latent_dim == 0 || spec.data_dim == 0 {
            return Err(Error::contract("latent and data dimensions must be positive"));
        }
        let encoder = LipschitzMlp::new(
            &MlpSpec {
                input_dim: spec.data_dim,
                hidden: spec.hidden.clone(),
                output_dim: 2 * spec.latent_dim,
                group_size: spec.group_size,
                lipschitz: spec.k_phi,
                bjorck_iterations: spec.bjorck_iterations,
            },
            rng,
        )?;
        let decoder = LipschitzMlp::new(
            &MlpSpec {
                input_dim: spec.latent_dim,
                hidden: spec.hidden.clone(),
                output_dim: spec.data_dim,
                group_size: spec.group_size,
                lipschitz: spec.k_theta,
                bjorck_iterations: spec.bjorck_iterations,
            },
            rng,
        )?;
        Ok(VaeModel { encoder, decoder, latent_dim: spec.latent_dim, data_dim: spec.data_dim })
    }

    pub fn from_parts(encoder: LipschitzMlp, decoder: LipschitzMlp) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim {
            return Err(Error::dim(
                "VaeModel",
                format!("encoder emits {} values for a {latent_dim}-dimensional latent", encoder.output_dim()),
            ));
        }
        if encoder.input_dim() != decoder.output_dim() {
            return Err(Error::dim(
                "VaeModel",
                format!("encoder reads {} values, decoder writes {}", encoder.input_dim(), decoder.output_dim()),
            ));
        }
        Ok(VaeModel { data_dim: encoder.input_dim(), encoder, decoder, latent_dim })
    }

    pub fn k_phi(&self) -> f64 {
        self.encoder.lipschitz_constant()
    }

    pub fn k_theta(&self) -> f64 {
        self.decoder.lipschitz_constant()
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn register(&self, g: &mut Graph, trainable: bool) -> VaeVars {
        VaeVars { encoder: self.encoder.register(g, trainable), decoder: self.decoder.register(g, trainable) }
    }

    /// Leaf handles in the same order as [`VaeModel::params_mut`].
    pub fn param_vars(vars: &VaeVars) -> Vec<Var> {
        vars.encoder.layers.iter().chain(&vars.decoder.layers).flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn effective(&self) -> Result<EffectiveVae> {
        Ok(EffectiveVae {
            encoder: self.encoder.effective()?,
            decoder: self.decoder.effective()?,
            latent_dim: self.latent_dim,
        })
    }
}

impl EffectiveVae {
    /// Row-wise `(μ, σ)` for a batch.
    pub fn encode_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let q = self.encoder.forward(x)?;
        let d = self.latent_dim;
        Ok((q.slice_cols(0, d), q.slice_cols(d, 2 * d).map(softplus)))
    }

    pub fn decode_batch(&self, z: &Matrix) -> Result<Matrix> {
        self.decoder.forward(z)
    }

    pub fn encode(&self, x: &[f64]) -> Result<EncoderOutput> {
        let (mu, sigma) = self.encode_batch(&Matrix::row_vector(x))?;
        Ok(EncoderOutput { mu: mu.into_vec(), sigma: sigma.into_vec() })
    }

    /// Concatenated `[μ; σ]` rows, i.e. `Q_φ` with softplus applied.
    pub fn posterior_params(&self, x: &Matrix) -> Result<Matrix> {
        let (mu, sigma) = self.encode_batch(x)?;
        let d = self.latent_dim;
        let mut q = Matrix::zeros(x.rows(), 2 * d);
        for r in 0..x.rows() {
            q.row_mut(r)[..d].copy_from_slice(mu.row(r));
            q.row_mut(r)[d..].copy_from_slice(sigma.row(r));
        }
        Ok(q)
    }

    /// `‖x_i − g_θ(z_i)‖` per row.
    pub fn rec_rmse_rows(&self, z: &Matrix, x: &Matrix) -> Result<Vec<f64>> {
        let xh = self.decode_batch(z)?;
        if xh.shape() != x.shape() {
            return Err(Error::dim("rec_loss", format!("{:?} vs {:?}", xh.shape(), x.shape())));
        }
        Ok((0..x.rows()).map(|r| dist(x.row(r), xh.row(r))).collect())
    }
}

fn check_posterior(out: &EncoderOutput) -> Result<()> {
    if out.mu.len() != out.sigma.len() {
        return Err(Error::dim("posterior", format!("{} means, {} scales", out.mu.len(), out.sigma.len())));
    }
    if let Some(s) = out.sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::contract(format!("posterior scale must be positive and finite, got {s}")));
    }
    Ok(())
}

/// Posterior parameters for a single input.
pub fn encode(model: &VaeModel, x: &[f64]) -> Result<EncoderOutput> {
    if x.len() != model.data_dim {
        return Err(Error::dim("encode", format!("input of length {} for data dimension {}", x.len(), model.data_dim)));
    }
    model.effective()?.encode(x)
}

/// `z = μ + σ ⊙ ε`.
pub fn reparameterize(out: &EncoderOutput, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != out.mu.len() || out.sigma.len() != out.mu.len() {
        return Err(Error::dim("reparameterize", format!("noise of length {} for latent {}", eps.len(), out.mu.len())));
    }
    Ok(out.mu.iter().zip(&out.sigma).zip(eps).map(|((m, s), e)| m + s * e).collect())
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − 2 ln σ)`.
pub fn kl_to_prior(out: &EncoderOutput) -> Result<f64> {
    check_posterior(out)?;
    Ok(kl_terms(&out.mu, &out.sigma))
}

/// Closed-form KL without validation; callers guarantee `σ > 0`.
pub(crate) fn kl_terms(mu: &[f64], sigma: &[f64]) -> f64 {
    0.5 * mu.iter().zip(sigma).map(|(m, s)| m * m + s * s - 1.0 - 2.0 * s.ln()).sum::<f64>()
}

/// `√(‖μ‖² + ‖σ − 1‖²)`: the W2 distance between the posterior and the prior.
pub(crate) fn prior_gap_terms(mu: &[f64], sigma: &[f64]) -> f64 {
    (mu.iter().map(|m| m * m).sum::<f64>() + sigma.iter().map(|s| (s - 1.0) * (s - 1.0)).sum::<f64>()).sqrt()
}

/// Certificate loss `‖x − g_θ(z)‖`.
pub fn rec_loss_rmse(model: &VaeModel, z: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(model, z, x)?;
    let xh = model.decoder.forward(z)?;
    Ok(dist(x, &xh))
}

/// Training loss `‖x − g_θ(z)‖²`.
pub fn rec_loss_mse(model: &VaeModel, z: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(model, z, x)?;
    let xh = model.decoder.forward(z)?;
    Ok(x.iter().zip(&xh).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn check_pair(model: &VaeModel, z: &[f64], x: &[f64]) -> Result<()> {
    if z.len() != model.latent_dim || x.len() != model.data_dim {
        return Err(Error::dim(
            "rec_loss",
            format!("z has {} entries (latent {}), x has {} (data {})", z.len(), model.latent_dim, x.len(), model.data_dim),
        ));
    }
    Ok(())
}

/// Tape nodes of one objective evaluation.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveNodes {
    /// Batch mean of MSE plus β times KL.
    pub loss: Var,
    /// Batch (and draw) mean squared reconstruction error.
    pub mse: Var,
    /// Batch mean KL to the prior.
    pub kl: Var,
}

/// Builds the objective on `g`. `noise` holds one `batch x latent` standard
/// normal matrix per reparameterized draw.
pub fn objective_graph(
    g: &mut Graph,
    model: &VaeModel,
    vars: &VaeVars,
    batch: &Matrix,
    beta: f64,
    noise: &[Matrix],
) -> Result<ObjectiveNodes> {
    if !(beta > 0.0) {
        return Err(Error::contract(format!("beta must be positive, got {beta}")));
    }
    if batch.rows() == 0 {
        return Err(Error::contract("empty batch"));
    }
    if noise.is_empty() {
        return Err(Error::contract("at least one reparameterized draw is required"));
    }
    let d = model.latent_dim;
    let b = batch.rows() as f64;
    let x = g.constant(batch.clone());
    let enc = model.encoder.effective_graph(g, &vars.encoder)?;
    let dec = model.decoder.effective_graph(g, &vars.decoder)?;
    let q = model.encoder.apply_graph(g, &enc, x)?;
    let mu = g.slice_cols(q, 0, d)?;
    let raw = g.slice_cols(q, d, 2 * d)?;
    let sigma = g.softplus(raw);

    let mut rec_total: Option<Var> = None;
    for eps in noise {
        if eps.shape() != (batch.rows(), d) {
            return Err(Error::dim("objective", format!("noise {:?} for batch {} x latent {d}", eps.shape(), batch.rows())));
        }
        let e = g.constant(eps.clone());
        let se = g.mul(sigma, e)?;
        let z = g.add(mu, se)?;
        let xh = model.decoder.apply_graph(g, &dec, z)?;
        let r = g.sub(x, xh)?;
        let sq = g.square(r);
        let s = g.sum_all(sq);
        rec_total = Some(match rec_total {
            None => s,
            Some(acc) => g.add(acc, s)?,
        });
    }
    let mse = g.scale(rec_total.expect("noise is non-empty"), 1.0 / (b * noise.len() as f64));

    let mu2 = g.square(mu);
    let s2 = g.square(sigma);
    let ls = g.log(sigma);
    let t = g.add(mu2, s2)?;
    let t = g.lincomb(t, 1.0, ls, -2.0)?;
    let t = g.shift(t, -1.0);
    let kl_sum = g.sum_all(t);
    let kl = g.scale(kl_sum, 0.5 / b);

    let loss = g.lincomb(mse, 1.0, kl, beta)?;
    Ok(ObjectiveNodes { loss, mse, kl })
}

/// Objective value for a batch with `mc_samples` fresh draws per row.
pub fn objective(model: &VaeModel, batch: &Matrix, beta: f64, mc_samples: usize, rng: &mut Rng) -> Result<f64> {
    let noise: Vec<Matrix> = (0..mc_samples.max(1))
        .map(|_| Matrix::from_vec(batch.rows(), model.latent_dim, rng.gaussian(batch.rows() * model.latent_dim)))
        .collect::<Result<_>>()?;
    let mut g = Graph::new();
    let vars = model.register(&mut g, false);
    let nodes = objective_graph(&mut g, model, &vars, batch, beta, &noise)?;
    Ok(g.value(nodes.loss).item())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> VaeSpec {
        VaeSpec {
            data_dim: 2,
            latent_dim: 2,
            hidden: vec![8, 8],
            k_phi: 2.0,
            k_theta: 2.0,
            group_size: 2,
            bjorck_iterations: 15,
        }
    }

    fn zeroed(model: &mut VaeModel) {
        for p in model.params_mut() {
            p.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_encoder_gives_softplus_zero() {
        let mut model = VaeModel::new(&small_spec(), &mut Rng::new(1)).unwrap();
        zeroed(&mut model);
        let out = encode(&model, &[0.3, -0.7]).unwrap();
        assert_eq!(out.mu, vec![0.0, 0.0]);
        for s in out.sigma {
            assert!((s - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_is_deterministic_and_checks_dims() {
        let model = VaeModel::new(&small_spec(), &mut Rng::new(2)).unwrap();
        assert_eq!(encode(&model, &[0.1, 0.2]).unwrap(), encode(&model, &[0.1, 0.2]).unwrap());
        assert!(matches!(encode(&model, &[0.1]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn encoder_pairs_respect_k_phi() {
        let model = VaeModel::new(&small_spec(), &mut Rng::new(3)).unwrap();
        let eff = model.effective().unwrap();
        let mut rng = Rng::new(4);
        let a = Matrix::from_vec(2000, 2, rng.gaussian(4000)).unwrap();
        let b = Matrix::from_vec(2000, 2, rng.gaussian(4000)).unwrap();
        let r = crate::net::max_pair_ratio(&a, &b, |m| eff.posterior_params(m)).unwrap();
        assert!(r <= model.k_phi() * (1.0 + 1e-6));
    }

    #[test]
    fn reparameterization_cases() {
        let out = EncoderOutput { mu: vec![1.0, -2.0], sigma: vec![0.5, 3.0] };
        assert_eq!(reparameterize(&out, &[0.0, 0.0]).unwrap(), out.mu);
        let tiny = EncoderOutput { mu: vec![1.0, -2.0], sigma: vec![1e-300, 1e-300] };
        assert_eq!(reparameterize(&tiny, &[1.3, -0.4]).unwrap(), tiny.mu);
        assert!(reparameterize(&out, &[0.0]).is_err());
    }

    #[test]
    fn reparameterized_moments() {
        let out = EncoderOutput { mu: vec![0.7, -1.5], sigma: vec![0.3, 2.0] };
        let mut rng = Rng::new(5);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| reparameterize(&out, &rng.gaussian(2)).unwrap()).collect();
        for j in 0..2 {
            let mean = draws.iter().map(|z| z[j]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|z| (z[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let s2 = out.sigma[j].powi(2);
            assert!((mean - out.mu[j]).abs() <= 3.0 * (s2 / n as f64).sqrt());
            // Var of the sample variance is 2σ⁴/(n−1) for Gaussians.
            assert!((var - s2).abs() <= 3.0 * (2.0 * s2 * s2 / (n - 1) as f64).sqrt());
        }
        let cov = draws.iter().map(|z| (z[0] - 0.7) * (z[1] + 1.5)).sum::<f64>() / n as f64;
        assert!(cov.abs() <= 3.0 * 0.3 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn kl_closed_form_cases() {
        let kl = |mu: Vec<f64>, sigma: Vec<f64>| kl_to_prior(&EncoderOutput { mu, sigma }).unwrap();
        assert_eq!(kl(vec![0.0, 0.0], vec![1.0, 1.0]), 0.0);
        assert!((kl(vec![1.0, 0.0, 0.0], vec![1.0; 3]) - 0.5).abs() < 1e-15);
        assert!(kl_to_prior(&EncoderOutput { mu: vec![0.0], sigma: vec![0.0] }).is_err());
        assert!(kl_to_prior(&EncoderOutput { mu: vec![0.0], sigma: vec![-1.0] }).is_err());
    }

    /// KL(N(0, 4) ‖ N(0, 1)) by Simpson quadrature of q ln(q/p).
    #[test]
    fn kl_matches_quadrature() {
        let s = 2.0_f64;
        let q = |x: f64| (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let lr = |x: f64| -s.ln() - x * x / (2.0 * s * s) + x * x / 2.0;
        let (a, b, n) = (-40.0, 40.0, 200_000);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * q(x) * lr(x);
        }
        let quad = acc * h / 3.0;
        let closed = kl_to_prior(&EncoderOutput { mu: vec![0.0], sigma: vec![2.0] }).unwrap();
        assert!((quad - closed).abs() < 1e-9, "{quad} vs {closed}");
        assert!((closed - 0.806853).abs() < 1e-6);
    }

    #[test]
    fn rec_losses() {
        let mut model = VaeModel::new(&small_spec(), &mut Rng::new(6)).unwrap();
        zeroed(&mut model);
        // Zero decoder maps everything to the origin.
        assert_eq!(rec_loss_rmse(&model, &[0.4, 0.1], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((rec_loss_rmse(&model, &[0.4, 0.1], &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-15);
        assert!((rec_loss_mse(&model, &[0.4, 0.1], &[3.0, 4.0]).unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(rec_loss_mse(&model, &[0.4, 0.1], &[0.0, 0.0]).unwrap(), 0.0);

        let model = VaeModel::new(&small_spec(), &mut Rng::new(7)).unwrap();
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let z = rng.gaussian(2);
            let x = rng.gaussian(2);
            let r = rec_loss_rmse(&model, &z, &x).unwrap();
            let m = rec_loss_mse(&model, &z, &x).unwrap();
            assert!((m - r * r).abs() <= 1e-12 * m.max(1.0));
        }
    }

    #[test]
    fn rmse_is_k_theta_lipschitz_in_z() {
        let model = VaeModel::new(&small_spec(), &mut Rng::new(9)).unwrap();
        let mut rng = Rng::new(10);
        for _ in 0..200 {
            let (z1, z2, x) = (rng.gaussian(2), rng.gaussian(2), rng.gaussian(2));
            let l1 = rec_loss_rmse(&model, &z1, &x).unwrap();
            let l2 = rec_loss_rmse(&model, &z2, &x).unwrap();
            assert!((l1 - l2).abs() <= model.k_theta() * dist(&z1, &z2) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn zero_network_objective_by_hand() {
        let mut model = VaeModel::new(&small_spec(), &mut Rng::new(11)).unwrap();
        zeroed(&mut model);
        let batch = Matrix::zeros(4, 2);
        let value = objective(&model, &batch, 1.0, 3, &mut Rng::new(0)).unwrap();
        let l2 = std::f64::consts::LN_2;
        let per_dim = 0.5 * (l2 * l2 - 1.0 - 2.0 * l2.ln());
        assert!((value - 2.0 * per_dim).abs() < 1e-14, "{value} vs {}", 2.0 * per_dim);
    }

    #[test]
    fn objective_rejects_bad_inputs() {
        let model = VaeModel::new(&small_spec(), &mut Rng::new(12)).unwrap();
        assert!(objective(&model, &Matrix::zeros(0, 2), 1.0, 1, &mut Rng::new(0)).is_err());
        assert!(objective(&model, &Matrix::zeros(3, 2), 0.0, 1, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mut rng = Rng::new(13);
        let mut model = VaeModel::new(&small_spec(), &mut rng).unwrap();
        for p in model.params_mut() {
            let n = rng.gaussian(p.len());
            p.as_mut_slice().iter_mut().zip(n).for_each(|(v, e)| *v += 0.2 * e);
        }
        let batch = Matrix::from_vec(5, 2, rng.gaussian(10)).unwrap();
        let noise = vec![Matrix::from_vec(5, 2, rng.gaussian(10)).unwrap()];
        let eval = |m: &VaeModel| {
            let mut g = Graph::new();
            let vars = m.register(&mut g, false);
            let n = objective_graph(&mut g, m, &vars, &batch, 0.7, &noise).unwrap();
            g.value(n.loss).item()
        };
        let mut g = Graph::new();
        let vars = model.register(&mut g, true);
        let nodes = objective_graph(&mut g, &model, &vars, &batch, 0.7, &noise).unwrap();
        let grads = g.backward(nodes.loss).unwrap();
        let pv = VaeModel::param_vars(&vars);
        let h = 1e-5;
        let n_params = model.params().len();
        for pi in 0..n_params {
            let an = grads.wrt(pv[pi]);
            for k in (0..an.len()).step_by(3) {
                let mut mp = model.clone();
                mp.params_mut()[pi].as_mut_slice()[k] += h;
                let mut mm = model.clone();
                mm.params_mut()[pi].as_mut_slice()[k] -= h;
                let fd = (eval(&mp) - eval(&mm)) / (2.0 * h);
                let a = an.as_slice()[k];
                let rel = (fd - a).abs() / a.abs().max(fd.abs()).max(1e-3);
                assert!(rel <= 1e-4, "param {pi} entry {k}: {a} vs {fd}");
            }
        }
    }
}
