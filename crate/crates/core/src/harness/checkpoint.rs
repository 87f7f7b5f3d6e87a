use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::autodiff::{ParamRecord, ParamStore};
use crate::talf::TalfConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activations {
    pub update: String,
    pub message: String,
    pub demand_encoder: String,
    pub output: String,
}

impl Default for Activations {
    fn default() -> Self {
        Activations {
            update: "relu".into(),
            message: "relu".into(),
            demand_encoder: "affine+relu".into(),
            output: "sigmoid".into(),
        }
    }
}

/// Structural choices baked into the model, recorded for readers of the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFlags {
    pub shared_seed_embeddings: bool,
    pub flag_node_features: bool,
    pub mean_neighbor_aggregation: bool,
    pub edges_before_nodes: bool,
}

impl Default for ModelFlags {
    fn default() -> Self {
        ModelFlags {
            shared_seed_embeddings: true,
            flag_node_features: true,
            mean_neighbor_aggregation: true,
            edges_before_nodes: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub weighted_loss: bool,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: TalfConfig,
    pub activations: Activations,
    pub flags: ModelFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: CheckpointConfig,
    pub params: BTreeMap<String, ParamRecord>,
}

impl Checkpoint {
    pub fn new(model: &TalfConfig, store: &ParamStore, training: Option<TrainingMeta>) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: CheckpointConfig {
                model: model.clone(),
                activations: Activations::default(),
                flags: ModelFlags::default(),
                training,
            },
            params: store.to_checkpoint(),
        }
    }

    pub fn store(&self) -> Result<ParamStore> {
        Ok(ParamStore::from_checkpoint(&self.params, &self.config.model.param_names())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Json { line: 0, msg: e.to_string() })?;
        std::fs::write(path, s + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let c: Checkpoint = serde_json::from_str(&s).map_err(|e| HarnessError::Json { line: 0, msg: e.to_string() })?;
        if c.format_version != FORMAT_VERSION {
            return Err(HarnessError::Invalid(format!("unsupported checkpoint version {}", c.format_version)));
        }
        c.config.model.validate()?;
        Ok(c)
    }
}
