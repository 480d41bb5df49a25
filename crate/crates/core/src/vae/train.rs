//! Minibatch Adam on the β-weighted objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Graph, Matrix, Rng};
use crate::vae::{objective_graph, VaeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Reparameterized draws per example per step.
    pub mc_samples_train: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 1.0,
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mc_samples_train: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Example-weighted means over the epoch's minibatches.
    pub mean_mse: f64,
    pub mean_kl: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: VaeModel,
    pub history: Vec<EpochStats>,
}

struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    fn new(params: &[&Matrix]) -> Self {
        let zeros = |p: &&Matrix| Matrix::zeros(p.rows(), p.cols());
        Adam { m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect(), t: 0 }
    }

    fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, p) in params.into_iter().enumerate() {
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (k, (w, g)) in p.as_mut_slice().iter_mut().zip(grads[i].as_slice()).enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *w -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
    }
}

fn validate(cfg: &TrainConfig, data: &Matrix, model: &VaeModel) -> Result<()> {
    if !(cfg.beta > 0.0) || !cfg.beta.is_finite() {
        return Err(Error::Config(format!("beta must be positive, got {}", cfg.beta)));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.mc_samples_train == 0 {
        return Err(Error::Config("epochs, batch size and draws per step must be positive".into()));
    }
    // Zero is allowed: a smoke run that must leave the weights untouched.
    if !(cfg.learning_rate >= 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::Config(format!("learning rate must be finite and nonnegative, got {}", cfg.learning_rate)));
    }
    if data.rows() == 0 {
        return Err(Error::contract("empty training set"));
    }
    if data.cols() != model.data_dim {
        return Err(Error::dim("train", format!("data has {} columns, model expects {}", data.cols(), model.data_dim)));
    }
    Ok(())
}

/// Trains `model` on the rows of `data`. Shuffles and reparameterization
/// noise come from a single stream seeded by `cfg.seed`, so the result is a
/// function of the inputs.
pub fn train(mut model: VaeModel, data: &Matrix, cfg: &TrainConfig) -> Result<TrainOutcome> {
    validate(cfg, data, &model)?;
    let mut rng = Rng::with_stream(cfg.seed, 1);
    let mut adam = Adam::new(&model.params());
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let d = model.latent_dim;

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut mse_acc, mut kl_acc, mut loss_acc) = (0.0, 0.0, 0.0);
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.select_rows(idx);
            let noise: Vec<Matrix> = (0..cfg.mc_samples_train)
                .map(|_| Matrix::from_vec(idx.len(), d, rng.gaussian(idx.len() * d)))
                .collect::<Result<_>>()?;
            let mut g = Graph::new();
            let vars = model.register(&mut g, true);
            let nodes = objective_graph(&mut g, &model, &vars, &batch, cfg.beta, &noise)
                .map_err(|e| Error::Numerical(format!("epoch {epoch}, step {step}: {e}")))?;
            let loss = g.value(nodes.loss).item();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("epoch {epoch}, step {step}: loss is {loss}")));
            }
            let mut grads = g.backward(nodes.loss)?;
            let grads: Vec<Matrix> = VaeModel::param_vars(&vars).into_iter().map(|v| grads.take(v)).collect();
            if grads.iter().any(|m| !m.all_finite()) {
                return Err(Error::Numerical(format!("epoch {epoch}, step {step}: non-finite gradient")));
            }
            let w = idx.len() as f64;
            mse_acc += w * g.value(nodes.mse).item();
            kl_acc += w * g.value(nodes.kl).item();
            loss_acc += w * loss;
            drop(g);
            adam.step(model.params_mut(), &grads, cfg);
        }
        let n = data.rows() as f64;
        history.push(EpochStats { epoch, mean_mse: mse_acc / n, mean_kl: kl_acc / n, mean_loss: loss_acc / n });
    }
    Ok(TrainOutcome { model, history })
}
