use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, Result};
use crate::features::FeaturePipeline;
use crate::graphs::AssetGraph;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Everything needed to reproduce predictions: config echo, fitted
/// preprocessing, the training-period graph and named parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config: ModelConfig,
    pub pipeline: FeaturePipeline,
    /// Present for static-graph versions.
    pub static_graph: Option<AssetGraph>,
    /// Days the parameters were fitted on.
    pub fit_range: Range<usize>,
    pub tickers: Vec<String>,
    pub best_epoch: usize,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format {} (expected {CHECKPOINT_FORMAT})",
                self.format
            )));
        }
        self.config.validate()?;
        if self.pipeline.version != self.config.version {
            return Err(ModelError::Checkpoint("pipeline and config versions differ".into()));
        }
        self.params.check(&self.config)?;
        if let Some(g) = &self.static_graph {
            g.validate()?;
            if g.n != self.tickers.len() {
                return Err(ModelError::Checkpoint("graph size does not match tickers".into()));
            }
        }
        Ok(())
    }
}
