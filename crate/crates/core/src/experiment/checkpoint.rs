//! Single-file JSON checkpoints.
//!
//! Each weight matrix is stored as `{rows, cols, data}` and floats are
//! written in shortest round-trip form, so a save/load cycle is bitwise.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSpec, SplitId};
use crate::error::{Error, Result};
use crate::net::LipschitzMlp;
use crate::vae::{EpochStats, TrainConfig, VaeModel, VaeSpec};

pub const CHECKPOINT_FORMAT: &str = "vaecert-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: VaeSpec,
    pub model: VaeModel,
    pub master_seed: u64,
    pub init_seed: u64,
    pub train: TrainConfig,
    pub history: Vec<EpochStats>,
    pub dataset: DatasetSpec,
    /// The split the weights were fitted on.
    pub trained_on: SplitId,
}

impl Checkpoint {
    pub fn beta(&self) -> f64 {
        self.train.beta
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::io::write_json(path, self)
    }

    /// Reads a checkpoint, refusing unknown format tags and structurally
    /// inconsistent networks.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::other(format!("{}: {e}", path.display()))))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => {
                return Err(Error::Format(format!(
                    "unsupported checkpoint format {other:?}, expected {CHECKPOINT_FORMAT:?}"
                )))
            }
        }
        let ck: Checkpoint = serde_json::from_value(value)?;
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        let rebuild = |net: &LipschitzMlp| {
            LipschitzMlp::from_layers(net.layers().to_vec(), net.group_size(), net.lipschitz_constant())
        };
        let model = VaeModel::from_parts(rebuild(&self.model.encoder)?, rebuild(&self.model.decoder)?)?;
        if model != self.model || model.latent_dim != self.spec.latent_dim || model.data_dim != self.spec.data_dim {
            return Err(Error::Format("checkpoint networks disagree with the recorded architecture".into()));
        }
        if self.model.params().iter().any(|m| !m.all_finite()) {
            return Err(Error::Format("checkpoint weights must be finite".into()));
        }
        Ok(())
    }
}
