use rand::seq::index::sample;

use super::{bce_loss, TrainError};
use crate::nn::{ModelParams, Tensor4, TRAINABLE_NAMES};
use crate::rng;

/// Comparison of analytic and central-difference gradients for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub checked: usize,
    pub max_abs_error: f64,
    /// Largest gradient magnitude (analytic or numeric) among checked entries.
    pub scale: f64,
    /// `max_abs_error / scale`; zero when every checked gradient is zero.
    pub relative_error: f64,
}

/// Training objective (data term plus regularization) with dropout off.
pub fn objective(params: &ModelParams, x: &Tensor4, labels: &[u8]) -> Result<f64, TrainError> {
    let cache = params.forward_train(x, None)?;
    Ok(bce_loss(&cache.probabilities, labels)?.0 + params.penalty(&cache))
}

/// Compare backpropagated gradients with central differences of step `h`.
///
/// With `per_tensor = None` every entry is perturbed. Otherwise at most that
/// many entries per tensor are drawn at random, always including the entry
/// with the largest analytic gradient.
pub fn gradient_check(
    params: &ModelParams,
    x: &Tensor4,
    labels: &[u8],
    h: f64,
    per_tensor: Option<usize>,
    seed: u64,
) -> Result<Vec<TensorCheck>, TrainError> {
    let cache = params.forward_train(x, None)?;
    let (_, upstream) = bce_loss(&cache.probabilities, labels)?;
    let analytic = params.backward(&cache, &upstream)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(TRAINABLE_NAMES.len());

    for (t, name) in TRAINABLE_NAMES.iter().enumerate() {
        let grad = &analytic.0[t];
        let n = grad.len();
        let indices: Vec<usize> = match per_tensor {
            Some(m) if m < n => {
                let top = (0..n).fold(0, |b, i| if grad[i].abs() > grad[b].abs() { i } else { b });
                let mut idx = sample(&mut rng::stream(seed, "gradcheck", &[t as u64]), n, m).into_vec();
                if !idx.contains(&top) {
                    idx[0] = top;
                }
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let (mut max_abs_error, mut scale) = (0.0f64, 0.0f64);
        for &i in &indices {
            let original = probe.trainable()[t][i];
            probe.trainable_mut()[t][i] = original + h;
            let up = objective(&probe, x, labels)?;
            probe.trainable_mut()[t][i] = original - h;
            let down = objective(&probe, x, labels)?;
            probe.trainable_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * h);
            max_abs_error = max_abs_error.max((numeric - grad[i]).abs());
            scale = scale.max(numeric.abs()).max(grad[i].abs());
        }
        out.push(TensorCheck {
            name,
            checked: indices.len(),
            max_abs_error,
            scale,
            relative_error: if scale > 0.0 { max_abs_error / scale } else { 0.0 },
        });
    }
    Ok(out)
}
