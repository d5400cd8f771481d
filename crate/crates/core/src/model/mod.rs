//! Word-level tokenizer, decoder-only pre-norm transformer with an exposed
//! residual stream, the training loop that instills recall and copy
//! behaviors, and the deterministic greedy decoder.

mod checkpoint;
mod decode;
mod prompt;
mod train;
mod transformer;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use decode::{greedy_decode, Decoded, Step};
pub use prompt::{assemble_prompt, Location, PromptSpec};
pub use train::{
    flat_param_training_loss, train, CurriculumItem, EpochMetrics, TrainHyper, TrainedModel,
};
pub use transformer::{
    forward, forward_last, init_params, BlockView, CaptureSink, Params, ResidualEdit,
};
pub use vocab::Vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("sequence of {len} tokens exceeds max_seq {max_seq}")]
    TooLong { len: usize, max_seq: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("behavior gate not reached after {epochs} epochs (recall EM {recall:.3}, copy EM {copy:.3})")]
    GateNotReached {
        epochs: usize,
        recall: f64,
        copy: f64,
        metrics: Vec<EpochMetrics>,
    },
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Kb(#[from] crate::synthkb::KbError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture hyperparameters. `d_model` is the residual width that
/// arbitration vectors live in; layers index the post-block hook sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return Err(ModelError::InvalidConfig("zero-sized dimension".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Residual-stream site addressed by capture and steering: the stream
/// after block `layer` completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HookSite {
    ResidualPostBlock,
    AttentionProbs,
    MlpOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HookPoint {
    pub layer: usize,
    pub site: HookSite,
}
