//! Cough-sound classification from MFCC features with a small ConvNet
//! trained from scratch.
//!
//! The pipeline runs audio ingestion ([`audio`]), MFCC extraction
//! ([`features`]), positive-class augmentation ([`augment`]), the network
//! with hand-written backpropagation ([`nn`]), Adam training under stratified
//! k-fold cross-validation ([`training`]) and ROC/AUC reporting
//! ([`evaluation`]). [`synth`] generates a labelled two-class corpus for
//! end-to-end checks.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod augment;
pub mod evaluation;
pub mod features;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod training;

pub use audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
pub use augment::{AugmentSpec, LabeledClip};
pub use evaluation::{ConfusionMatrix, CvReport, EvalReport, RocCurve};
pub use features::{FeatureConfig, FeatureExtractor, FeatureMatrix};
pub use nn::{InputShape, ModelConfig, ModelParams, Tensor4};
pub use training::{TrainConfig, TrainError};
