use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{init_params, ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::grid::{NormStats, SplitSpec};

pub const CHECKPOINT_FORMAT: &str = "cbamnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters together with everything needed to rebuild features.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub params: ModelParams,
    pub norm: NormStats,
    pub split: SplitSpec,
}

#[derive(Serialize, Deserialize)]
struct Block {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    config: ModelConfig,
    input_dim: usize,
    split: SplitSpec,
    norm: NormStats,
    blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        if !self.params.is_finite() {
            return Err(Error::Contract("refusing to save non-finite parameters".into()));
        }
        self.params.check_shapes(&self.config, self.input_dim)?;
        let doc = Document {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            input_dim: self.input_dim,
            split: self.split,
            norm: self.norm.clone(),
            blocks: self
                .params
                .blocks()
                .into_iter()
                .map(|(name, t)| Block {
                    name,
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!("not a checkpoint: format tag `{}`", doc.format)));
        }
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                doc.version
            )));
        }
        let mut params = init_params(&doc.config, doc.input_dim)?;
        let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
        if names.len() != doc.blocks.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} parameter blocks, config implies {}",
                doc.blocks.len(),
                names.len()
            )));
        }
        for ((slot, name), block) in params.blocks_mut().into_iter().zip(&names).zip(doc.blocks) {
            if &block.name != name {
                return Err(Error::Schema(format!(
                    "expected parameter block `{name}`, found `{}`",
                    block.name
                )));
            }
            let t = Tensor::new(block.rows, block.cols, block.data)?;
            if t.shape() != slot.shape() {
                return Err(Error::Schema(format!(
                    "block `{name}` has shape {:?}, config implies {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(Self {
            config: doc.config,
            input_dim: doc.input_dim,
            params,
            norm: doc.norm,
            split: doc.split,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}
