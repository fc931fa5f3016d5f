//! LSTM → GAT → tanh head allocation network and its training loop.
//!
//! A mini-batch of `B` dates over `n` assets is laid out as `B·n` rows; the
//! LSTM runs over every row with shared weights, attention is restricted to
//! rows of the same date by a block-diagonal mask, and the head scores are
//! normalized per date so each weight row sums to one.

mod adam;
mod check;
mod checkpoint;
mod config;
mod forward;
mod loss;
mod params;
mod predict;
mod train;

pub use adam::Adam;
pub use check::{end_to_end_grad_check, tiny_config, CHECK_INPUT_DIM};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::ModelConfig;
pub use forward::{assemble_batch, forward, normalize, Batch, ForwardOutput, GraphSource, ParamVars};
pub use loss::{batch_loss, sharpe_loss, sharpe_loss_value, LossOutput};
pub use params::{Layout, ModelParams, NamedTensor, ParamGroup};
pub use predict::{predict_weights, read_weights_csv, write_weights_csv, WeightMatrix};
pub use train::{annualized_sharpe, train, EpochRecord, LossTargets, TrainOutcome, TrainingData};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::features::FeatureError;
use crate::graphs::GraphError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no eligible training dates in [{start}, {end})")]
    NoEligibleDates { start: usize, end: usize },
    #[error("model expects {expected} input features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("degenerate allocation on day {day}: |sum of scores| = {sum:e}")]
    Degenerate { day: usize, sum: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;
