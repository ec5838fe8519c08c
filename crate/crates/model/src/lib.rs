//! Encoder backbones, task heads, relation prompts, checkpoints and the
//! training loops that tie them together.

pub mod backbone;
pub mod checkpoint;
pub mod heads;
pub mod params;
pub mod prompt;
pub mod training;
pub mod vocab;

pub use backbone::{set_global_attention, AttentionMode, Backbone, BackboneConfig, GlobalPolicy, ToyTransformer};
pub use heads::{aci_forward, rtp_forward, AciHead, RtpHead, RtpInput, RtpMode};
pub use prompt::{build_prompt, PromptInstance};
pub use vocab::Vocab;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("prompt error: {0}")]
    Prompt(String),
    #[error("batching error: {0}")]
    Batch(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Crf(#[from] argmine_core::crf::CrfError),
    #[error(transparent)]
    Eval(#[from] argmine_core::evaluation::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
