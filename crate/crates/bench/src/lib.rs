//! Fixtures shared by the benchmarks.

use coughnet::nn::{InputShape, ModelConfig, ModelParams, Tensor4};
use coughnet::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};

/// A canonical-length clip of decaying tone bursts.
pub fn burst_clip() -> AudioClip {
    let samples = (0..CLIP_SAMPLES)
        .map(|t| {
            let local = (t % 22_050) as f64 / f64::from(SAMPLE_RATE);
            (-local * 8.0).exp() * (t as f64 * 0.11).sin() * 0.5
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE)
}

/// A deterministic pseudo-random input batch.
pub fn input_batch(input: InputShape, batch: usize) -> Tensor4 {
    let n = batch * input.frames * input.coeffs;
    let data = (0..n).map(|i| ((i as f64 * 12.9898).sin() * 43_758.545).fract() * 2.0).collect();
    Tensor4::new([batch, input.frames, input.coeffs, 1], data).expect("valid dims")
}

/// Canonical model with batch-norm statistics from one batch, ready for inference.
pub fn ready_model() -> ModelParams {
    let mut params = ModelParams::init(ModelConfig::default(), 1, 0).expect("valid config");
    let cache = params.forward_train(&input_batch(InputShape::CANONICAL, 4), None).expect("shapes match");
    params.update_batch_stats(&cache);
    params
}

/// Alternating labels for `n` examples.
pub fn labels(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i % 2) as u8).collect()
}
