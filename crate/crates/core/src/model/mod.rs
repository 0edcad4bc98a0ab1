//! Decoder-only transformer inference with residual capture and interventions.

mod config;
mod engine;
mod format;
mod generate;
mod sample;
mod weights;

pub use config::{HookPoint, ModelConfig};
pub use engine::{Engine, KvState, StepOutput};
pub use format::{decode_weights, encode_weights, load_weights, save_weights, FORMAT_VERSION, MAGIC};
pub use generate::{generate, Generation, HookSpec, Intervention, ResidualCache};
pub use sample::{sample_token, softmax_f64};
pub use weights::{Block, LayerNorm, Mat, Weights};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_seq {max}")]
    Capacity { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("hook error: {0}")]
    Hook(String),
    #[error("weights format error in {tensor}: {reason}")]
    Format { tensor: String, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
