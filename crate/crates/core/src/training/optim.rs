use super::TrainError;
use crate::nn::{Gradients, ModelParams};

const P_MIN: f64 = 1e-12;

/// Mean binary cross-entropy of `probs` against `labels`, with the gradient
/// with respect to each probability. Probabilities are clamped to
/// `[1e-12, 1 - 1e-12]` first.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>), TrainError> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(TrainError::Shape(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        if y > 1 {
            return Err(TrainError::LabelOutOfDomain(y));
        }
        let p = p.clamp(P_MIN, 1.0 - P_MIN);
        if y == 1 {
            loss -= p.ln();
            grad.push(-1.0 / (p * n));
        } else {
            loss -= (1.0 - p).ln();
            grad.push(1.0 / ((1.0 - p) * n));
        }
    }
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    let tensors = params.trainable_mut();
    if grads.0.len() != tensors.len() || state.m.len() != tensors.len() {
        return Err(TrainError::Shape("gradient tensor count differs from the parameters".into()));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (((p, g), m), v) in tensors.into_iter().zip(&grads.0).zip(&mut state.m).zip(&mut state.v) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(TrainError::Shape("gradient shape differs from its parameter".into()));
        }
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
