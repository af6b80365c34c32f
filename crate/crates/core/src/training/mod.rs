//! Loss, optimizer, fold planning and the cross-validated training loop.

mod config;
mod folds;
mod gradcheck;
mod optim;
mod run;

use thiserror::Error;

pub use config::{AugmentScope, FinalModel, TrainConfig, CONFIG_KEYS};
pub use folds::{stratified_kfold, FoldPlan};
pub use gradcheck::{gradient_check, objective, TensorCheck};
pub use optim::{adam_step, bce_loss, AdamConfig, AdamState};
pub use run::{
    epoch_order, predict, run_cv, train_fold, CvOutcome, EpochRecord, Example, Featurizer, FoldResult, TrainedModel,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("label {0} is not 0 or 1")]
    LabelOutOfDomain(u8),
    #[error("class {class} has {count} examples, fewer than the {k} folds")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty {0}")]
    Empty(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}
