//! TOML experiment configuration.
//!
//! ```toml
//! seed = 0
//! output_dir = "runs/two_gaussians"
//!
//! [dataset]
//! kind = "two_gaussians"          # or "circle", or "manifold" with d_star, d_x, k_star, prior
//! split_sizes = [50000, 20000, 20000]
//!
//! [model]
//! latent_dim = 2
//! hidden = [100, 100, 100]
//!
//! [training]
//! epochs = 20
//!
//! [certificate]
//! diameter = "exact_match"        # "analytic" (default), "empirical"
//! kinds = ["rec_bounded", "regen_bounded", "gen_bounded"]
//! ```
//!
//! Every section except `[dataset]` may be omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certificates::{CertificateKind, BETA_GRID, DEFAULT_DELTA, DEFAULT_MC_SAMPLES_CERT};
use crate::data::{DatasetSpec, Split, SPLIT_SIZES};
use crate::error::{Error, Result};
use crate::transport::MAX_ASSIGNMENT_SIZE;
use crate::vae::{TrainConfig, VaeSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Master seed; every other seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub certificate: CertificateConfig,
    #[serde(default)]
    pub w1: W1Config,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub spec: DatasetSpec,
    /// Defaults to the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_split_sizes")]
    pub split_sizes: [usize; 3],
}

fn default_split_sizes() -> [usize; 3] {
    SPLIT_SIZES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub k_phi: f64,
    pub k_theta: f64,
    pub group_size: usize,
    pub bjorck_iterations: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let s = VaeSpec::standard(2, 2);
        ModelConfig {
            latent_dim: s.latent_dim,
            hidden: s.hidden,
            k_phi: s.k_phi,
            k_theta: s.k_theta,
            group_size: s.group_size,
            bjorck_iterations: s.bjorck_iterations,
        }
    }
}

impl ModelConfig {
    pub fn vae_spec(&self, data_dim: usize) -> VaeSpec {
        VaeSpec {
            data_dim,
            latent_dim: self.latent_dim,
            hidden: self.hidden.clone(),
            k_phi: self.k_phi,
            k_theta: self.k_theta,
            group_size: self.group_size,
            bjorck_iterations: self.bjorck_iterations,
        }
    }
}

/// Optimizer settings shared by every β.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub mc_samples_train: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            mc_samples_train: t.mc_samples_train,
        }
    }
}

impl TrainingConfig {
    pub fn train_config(&self, beta: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            beta,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            mc_samples_train: self.mc_samples_train,
            seed,
        }
    }
}

/// Where the diameter of bounded certificates comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterChoice {
    /// Closed form from the generator's support.
    Analytic,
    /// Exact diameter of the union of the stored splits.
    Empirical,
    /// Pinned values: 2.668 (2-Gaussian) and 3.8 (circle).
    ExactMatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateConfig {
    pub delta: f64,
    pub beta_grid: Vec<f64>,
    pub mc_samples_cert: usize,
    pub diameter: DiameterChoice,
    pub kinds: Vec<CertificateKind>,
    /// Confidence spent on the latent box of Gaussian manifold certificates.
    pub delta_prime: Option<f64>,
    /// Split the certificates are computed on.
    pub split: Split,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig {
            delta: DEFAULT_DELTA,
            beta_grid: BETA_GRID.to_vec(),
            mc_samples_cert: DEFAULT_MC_SAMPLES_CERT,
            diameter: DiameterChoice::Analytic,
            kinds: vec![CertificateKind::RecBounded, CertificateKind::RegenBounded, CertificateKind::GenBounded],
            delta_prime: None,
            split: Split::Val,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct W1Config {
    /// Points on each side of every assignment problem.
    pub m: usize,
    pub seeds: Vec<u64>,
}

impl Default for W1Config {
    fn default() -> Self {
        W1Config { m: 2048, seeds: vec![0, 1, 2, 3, 4] }
    }
}

impl ExperimentConfig {
    /// Defaults for `spec` with nothing else set.
    pub fn new(spec: DatasetSpec) -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: default_output_dir(),
            dataset: DatasetConfig { spec, seed: None, split_sizes: SPLIT_SIZES },
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            certificate: CertificateConfig::default(),
            w1: W1Config::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dataset.split_sizes.contains(&0) {
            return bad(format!("split sizes must be positive, got {:?}", self.dataset.split_sizes));
        }
        if let DatasetSpec::Manifold { d_star, d_x, k_star, .. } = self.dataset.spec {
            if d_star == 0 || d_star > d_x || !(k_star > 0.0) {
                return bad(format!("manifold needs 1 <= d_star <= d_x and k_star > 0, got {d_star}, {d_x}, {k_star}"));
            }
        }
        let m = &self.model;
        if !(m.k_phi > 0.0 && m.k_theta > 0.0) || !m.k_phi.is_finite() || !m.k_theta.is_finite() {
            return bad(format!("Lipschitz constants must be positive, got {} and {}", m.k_phi, m.k_theta));
        }
        if m.latent_dim == 0 || m.group_size == 0 {
            return bad("latent dimension and group size must be positive".into());
        }
        if let Some(h) = m.hidden.iter().find(|&&h| h == 0 || h % m.group_size != 0) {
            return bad(format!("hidden width {h} must be a positive multiple of the group size {}", m.group_size));
        }
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || t.mc_samples_train == 0 {
            return bad("epochs, batch size and draws per step must be positive".into());
        }
        if !(t.learning_rate >= 0.0) || !t.learning_rate.is_finite() {
            return bad(format!("learning rate must be finite and nonnegative, got {}", t.learning_rate));
        }
        let c = &self.certificate;
        if c.beta_grid.is_empty() {
            return bad("the beta grid is empty".into());
        }
        if let Some(b) = c.beta_grid.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return bad(format!("beta values must be positive, got {b}"));
        }
        if !(c.delta > 0.0 && c.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", c.delta));
        }
        if let Some(dp) = c.delta_prime {
            if !(dp > 0.0 && c.delta + dp < 1.0) {
                return bad(format!("delta_prime must be positive with delta + delta_prime < 1, got {dp}"));
            }
        }
        if c.mc_samples_cert == 0 {
            return bad("mc_samples_cert must be positive".into());
        }
        if c.kinds.is_empty() {
            return bad("no certificate kinds requested".into());
        }
        if self.w1.m == 0 || self.w1.seeds.is_empty() {
            return bad("w1 needs a positive sample size and at least one seed".into());
        }
        if self.w1.m > MAX_ASSIGNMENT_SIZE {
            return Err(Error::Budget { requested: self.w1.m, budget: MAX_ASSIGNMENT_SIZE });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LatentPrior;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("[dataset]\nkind = \"circle\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::new(DatasetSpec::Circle));
        assert_eq!(cfg.certificate.beta_grid.len(), 9);
        assert_eq!(cfg.model.hidden, vec![100, 100, 100]);
    }

    #[test]
    fn manifold_section_parses_integer_constants() {
        let text = "seed = 7\n[dataset]\nkind = \"manifold\"\nd_star = 2\nd_x = 3\nk_star = 1\nprior = \"gaussian\"\n\
                    [certificate]\nkinds = [\"rec_manifold_gauss\"]\ndelta_prime = 0.01\ndiameter = \"exact_match\"\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dataset.spec, DatasetSpec::Manifold { d_star: 2, d_x: 3, k_star: 1.0, prior: LatentPrior::Gaussian });
        assert_eq!(cfg.dataset_seed(), 7);
        assert_eq!(cfg.certificate.diameter, DiameterChoice::ExactMatch);
    }

    #[test]
    fn roundtrips_through_toml() {
        let mut cfg = ExperimentConfig::new(DatasetSpec::TwoGaussians);
        cfg.certificate.delta_prime = Some(0.01);
        cfg.dataset.seed = Some(3);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let base = "[dataset]\nkind = \"circle\"\n";
        for extra in [
            "split_sizes = [0, 1, 1]\n",
            "[model]\nk_phi = 0.0\n",
            "[model]\nhidden = [3]\n",
            "[certificate]\nbeta_grid = []\n",
            "[certificate]\ndelta = 1.5\n",
            "[training]\nlearning_rate = -1.0\n",
            "[model]\nwidth = 3\n",
        ] {
            let r = ExperimentConfig::from_toml(&format!("{base}{extra}"));
            assert!(matches!(r, Err(Error::Config(_))), "{extra}: {r:?}");
        }
        let r = ExperimentConfig::from_toml(&format!("{base}[w1]\nm = 5000\n"));
        assert!(matches!(r, Err(Error::Budget { .. })));
    }
}
