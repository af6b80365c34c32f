//! The convolutional classifier with hand-written forward and backward
//! passes.
//!
//! Layer order: conv 3x3x64 + ReLU, 2x2 max pool, conv 2x2x32 + ReLU, batch
//! norm, flatten, dense 256 + ReLU, dropout 0.5, dense 128 + ReLU,
//! dropout 0.3, dense 1 + sigmoid. Tensors are NHWC `f64`.

mod checkpoint;
pub mod layers;
mod model;
mod tensor;

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta, LayerEntry, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use model::{
    ForwardCache, Gradients, InputShape, ModelConfig, ModelParams, Regularization, CANONICAL_FLATTEN, TRAINABLE_NAMES,
};
pub use tensor::Tensor4;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("inference requested before any training batch updated the batch-norm statistics")]
    InferBeforeTrain,
    #[error("forward cache does not match the parameters: {0}")]
    StaleCache(String),
    #[error("non-finite network output")]
    NonFinite,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
