use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_mask, maxpool2x2, maxpool2x2_backward, relu, relu_backward, sigmoid, BatchNorm, BatchNormCache, Conv2d,
    Dense,
};
use super::{NnError, Tensor4};
use crate::rng::{self, Rng};

/// Flatten width for the canonical 302x15 input.
pub const CANONICAL_FLATTEN: usize = 23_840;

/// Spatial size of one network input: time frames by MFCC coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub frames: usize,
    pub coeffs: usize,
}

impl InputShape {
    pub const CANONICAL: InputShape = InputShape { frames: 302, coeffs: 15 };

    /// Per-layer output shapes for a batch of `batch`, from the input through
    /// the sigmoid output. Errors when any spatial size collapses to zero.
    pub fn shape_chain(&self, batch: usize) -> Result<Vec<Vec<usize>>, NnError> {
        let (h, w) = (self.frames, self.coeffs);
        if h < 3 || w < 3 {
            return Err(NnError::ShapeMismatch(format!("input {h}x{w} is smaller than the 3x3 kernel")));
        }
        let (h1, w1) = (h - 2, w - 2);
        let (h2, w2) = (h1 / 2, w1 / 2);
        if h2 < 2 || w2 < 2 {
            return Err(NnError::ShapeMismatch(format!(
                "input {h}x{w} pools to {h2}x{w2}, too small for the 2x2 kernel"
            )));
        }
        let (h3, w3) = (h2 - 1, w2 - 1);
        Ok(vec![
            vec![batch, h, w, 1],
            vec![batch, h1, w1, CONV1_FILTERS],
            vec![batch, h2, w2, CONV1_FILTERS],
            vec![batch, h3, w3, CONV2_FILTERS],
            vec![batch, h3 * w3 * CONV2_FILTERS],
            vec![batch, DENSE1_UNITS],
            vec![batch, DENSE2_UNITS],
            vec![batch, 1],
        ])
    }

    pub fn flatten_width(&self) -> Result<usize, NnError> {
        Ok(self.shape_chain(1)?[4][1])
    }
}

const CONV1_FILTERS: usize = 64;
const CONV2_FILTERS: usize = 32;
const DENSE1_UNITS: usize = 256;
const DENSE2_UNITS: usize = 128;

/// L2 penalty coefficients applied to both hidden dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub kernel: f64,
    pub bias: f64,
    /// Scales the batch-mean squared post-ReLU activations.
    pub activity: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self { kernel: 1e-4, bias: 1e-4, activity: 1e-5 }
    }
}

impl Regularization {
    pub const NONE: Regularization = Regularization { kernel: 0.0, bias: 0.0, activity: 0.0 };
}

/// Network hyperparameters that are not learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input: InputShape,
    pub dropout1: f64,
    pub dropout2: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub regularization: Regularization,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input: InputShape::CANONICAL,
            dropout1: 0.5,
            dropout2: 0.3,
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
            regularization: Regularization::default(),
        }
    }
}

/// Names of the trainable tensors, in the order used by [`Gradients`] and the
/// optimizer.
pub const TRAINABLE_NAMES: [&str; 12] = [
    "conv1.kernel",
    "conv1.bias",
    "conv2.kernel",
    "conv2.bias",
    "bn.gamma",
    "bn.beta",
    "dense1.weights",
    "dense1.bias",
    "dense2.weights",
    "dense2.bias",
    "out.weights",
    "out.bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub bn: BatchNorm,
    pub dense1: Dense,
    pub dense2: Dense,
    pub out: Dense,
}

/// One gradient vector per trainable tensor, ordered as [`TRAINABLE_NAMES`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

/// Activations and masks from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor4,
    pub conv1: Tensor4,
    pub pool: Tensor4,
    pub pool_argmax: Vec<usize>,
    pub conv2: Tensor4,
    pub bn: BatchNormCache,
    pub flat: Vec<f64>,
    pub hidden1: Vec<f64>,
    pub mask1: Option<Vec<f64>>,
    pub dropped1: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub mask2: Option<Vec<f64>>,
    pub dropped2: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Output shape of every stage, input first.
    pub shapes: Vec<Vec<usize>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.input.batch()
    }
}

fn uniform(n: usize, limit: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn apply_mask(values: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => values.iter().zip(m).map(|(v, m)| v * m).collect(),
        None => values.to_vec(),
    }
}

fn dims_vec(t: &Tensor4) -> Vec<usize> {
    t.dims.to_vec()
}

impl ModelParams {
    /// Allocate with zero weights.
    pub fn zeros(config: ModelConfig) -> Result<Self, NnError> {
        let flat = config.input.flatten_width()?;
        if config.input == InputShape::CANONICAL && flat != CANONICAL_FLATTEN {
            return Err(NnError::ShapeMismatch(format!("canonical flatten width {flat} != {CANONICAL_FLATTEN}")));
        }
        for rate in [config.dropout1, config.dropout2] {
            if !(0.0..1.0).contains(&rate) {
                return Err(NnError::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        Ok(Self {
            config,
            conv1: Conv2d::zeros(3, 3, 1, CONV1_FILTERS),
            conv2: Conv2d::zeros(2, 2, CONV1_FILTERS, CONV2_FILTERS),
            bn: BatchNorm::new(CONV2_FILTERS, config.bn_momentum, config.bn_epsilon),
            dense1: Dense::zeros(flat, DENSE1_UNITS),
            dense2: Dense::zeros(DENSE1_UNITS, DENSE2_UNITS),
            out: Dense::zeros(DENSE2_UNITS, 1),
        })
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform for the output,
    /// zero biases, drawn from the `init` stream of `(seed, key)`.
    pub fn init(config: ModelConfig, seed: u64, key: u64) -> Result<Self, NnError> {
        let mut p = Self::zeros(config)?;
        let mut rng = rng::stream(seed, "init", &[key]);
        p.conv1.kernel = uniform(p.conv1.kernel.len(), he_limit(p.conv1.fan_in()), &mut rng);
        p.conv2.kernel = uniform(p.conv2.kernel.len(), he_limit(p.conv2.fan_in()), &mut rng);
        p.dense1.weights = uniform(p.dense1.weights.len(), he_limit(p.dense1.n_in), &mut rng);
        p.dense2.weights = uniform(p.dense2.weights.len(), he_limit(p.dense2.n_in), &mut rng);
        let glorot = (6.0 / (p.out.n_in + p.out.n_out) as f64).sqrt();
        p.out.weights = uniform(p.out.weights.len(), glorot, &mut rng);
        Ok(p)
    }

    pub fn input_shape(&self) -> InputShape {
        self.config.input
    }

    pub fn trainable(&self) -> [&Vec<f64>; 12] {
        [
            &self.conv1.kernel,
            &self.conv1.bias,
            &self.conv2.kernel,
            &self.conv2.bias,
            &self.bn.gamma,
            &self.bn.beta,
            &self.dense1.weights,
            &self.dense1.bias,
            &self.dense2.weights,
            &self.dense2.bias,
            &self.out.weights,
            &self.out.bias,
        ]
    }

    pub fn trainable_mut(&mut self) -> [&mut Vec<f64>; 12] {
        [
            &mut self.conv1.kernel,
            &mut self.conv1.bias,
            &mut self.conv2.kernel,
            &mut self.conv2.bias,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
            &mut self.out.weights,
            &mut self.out.bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor4) -> Result<Vec<Vec<usize>>, NnError> {
        let InputShape { frames, coeffs } = self.config.input;
        let [b, h, w, c] = x.dims;
        if h != frames || w != coeffs || c != 1 || b == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "expected input (B, {frames}, {coeffs}, 1) with B > 0, got {:?}",
                x.dims
            )));
        }
        self.config.input.shape_chain(b)
    }

    fn expect(chain: &[Vec<usize>], stage: usize, got: Vec<usize>) -> Result<Vec<usize>, NnError> {
        if chain[stage] != got {
            return Err(NnError::ShapeMismatch(format!("stage {stage} produced {got:?}, expected {:?}", chain[stage])));
        }
        Ok(got)
    }

    /// Training-mode forward pass using batch statistics. Dropout is active
    /// only when `dropout_rng` is given. Parameters are not modified; see
    /// [`ModelParams::update_batch_stats`].
    pub fn forward_train(&self, x: &Tensor4, mut dropout_rng: Option<&mut Rng>) -> Result<ForwardCache, NnError> {
        let chain = self.check_input(x)?;
        let b = x.batch();
        let mut shapes = vec![Self::expect(&chain, 0, dims_vec(x))?];

        let mut conv1 = self.conv1.forward(x)?;
        relu(&mut conv1.data);
        shapes.push(Self::expect(&chain, 1, dims_vec(&conv1))?);

        let (pool, pool_argmax) = maxpool2x2(&conv1);
        shapes.push(Self::expect(&chain, 2, dims_vec(&pool))?);

        let mut conv2 = self.conv2.forward(&pool)?;
        relu(&mut conv2.data);
        shapes.push(Self::expect(&chain, 3, dims_vec(&conv2))?);

        let (normed, bn) = self.bn.forward_train(&conv2)?;
        let flat = normed.data;
        shapes.push(Self::expect(&chain, 4, vec![b, flat.len() / b])?);

        let mut hidden1 = self.dense1.forward(&flat, b)?;
        relu(&mut hidden1);
        shapes.push(Self::expect(&chain, 5, vec![b, hidden1.len() / b])?);
        let mask1 = dropout_rng.as_mut().map(|r| dropout_mask(hidden1.len(), self.config.dropout1, r));
        let dropped1 = apply_mask(&hidden1, mask1.as_ref());

        let mut hidden2 = self.dense2.forward(&dropped1, b)?;
        relu(&mut hidden2);
        shapes.push(Self::expect(&chain, 6, vec![b, hidden2.len() / b])?);
        let mask2 = dropout_rng.as_mut().map(|r| dropout_mask(hidden2.len(), self.config.dropout2, r));
        let dropped2 = apply_mask(&hidden2, mask2.as_ref());

        let logits = self.out.forward(&dropped2, b)?;
        let probabilities: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        shapes.push(Self::expect(&chain, 7, vec![b, 1])?);
        check_finite(&probabilities)?;

        Ok(ForwardCache {
            input: x.clone(),
            conv1,
            pool,
            pool_argmax,
            conv2,
            bn,
            flat,
            hidden1,
            mask1,
            dropped1,
            hidden2,
            mask2,
            dropped2,
            probabilities,
            shapes,
        })
    }

    /// Fold the batch statistics of a training pass into the running
    /// batch-norm statistics.
    pub fn update_batch_stats(&mut self, cache: &ForwardCache) {
        self.bn.update_running(&cache.bn);
    }

    /// Inference-mode forward pass: running batch-norm statistics, no dropout.
    pub fn predict(&self, x: &Tensor4) -> Result<Vec<f64>, NnError> {
        let chain = self.check_input(x)?;
        let b = x.batch();
        let mut conv1 = self.conv1.forward(x)?;
        relu(&mut conv1.data);
        let (pool, _) = maxpool2x2(&conv1);
        drop(conv1);
        let mut conv2 = self.conv2.forward(&pool)?;
        relu(&mut conv2.data);
        Self::expect(&chain, 3, dims_vec(&conv2))?;
        let flat = self.bn.forward_infer(&conv2)?.data;
        let mut h1 = self.dense1.forward(&flat, b)?;
        relu(&mut h1);
        let mut h2 = self.dense2.forward(&h1, b)?;
        relu(&mut h2);
        let probs: Vec<f64> = self.out.forward(&h2, b)?.into_iter().map(sigmoid).collect();
        check_finite(&probs)?;
        Ok(probs)
    }

    /// Predict a list of `frames x coeffs` examples in fixed-size chunks.
    pub fn predict_examples(&self, examples: &[&[f64]], chunk: usize) -> Result<Vec<f64>, NnError> {
        let InputShape { frames, coeffs } = self.config.input;
        let mut out = Vec::with_capacity(examples.len());
        for part in examples.chunks(chunk.max(1)) {
            out.extend(self.predict(&Tensor4::from_examples(frames, coeffs, part)?)?);
        }
        Ok(out)
    }

    /// Regularization term for the dense layers given the activations of a
    /// training pass.
    pub fn penalty(&self, cache: &ForwardCache) -> f64 {
        let r = self.config.regularization;
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        r.kernel * (sq(&self.dense1.weights) + sq(&self.dense2.weights))
            + r.bias * (sq(&self.dense1.bias) + sq(&self.dense2.bias))
            + r.activity * (sq(&cache.hidden1) + sq(&cache.hidden2)) / cache.batch() as f64
    }

    fn check_cache(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(), NnError> {
        let chain = self.config.input.shape_chain(cache.batch()).map_err(|e| NnError::StaleCache(e.to_string()))?;
        if chain != cache.shapes {
            return Err(NnError::StaleCache(format!(
                "cache shapes {:?} do not match the parameters' chain {:?}",
                cache.shapes, chain
            )));
        }
        if upstream.len() != cache.batch() {
            return Err(NnError::ShapeMismatch(format!(
                "upstream gradient has {} entries for batch {}",
                upstream.len(),
                cache.batch()
            )));
        }
        Ok(())
    }

    /// Gradients of `L + penalty` where `upstream[i] = dL/dp_i` for the
    /// sigmoid outputs of the cached pass.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients, NnError> {
        self.check_cache(cache, upstream)?;
        let b = cache.batch();
        let reg = self.config.regularization;
        let mut g: Vec<Vec<f64>> = self.trainable().iter().map(|t| vec![0.0; t.len()]).collect();

        let dz: Vec<f64> = upstream.iter().zip(&cache.probabilities).map(|(d, p)| d * p * (1.0 - p)).collect();
        let (gw, rest) = g[10..].split_at_mut(1);
        let d_dropped2 = self.out.backward(&cache.dropped2, &dz, &mut gw[0], &mut rest[0], true).unwrap();

        let mut d_h2 = apply_mask(&d_dropped2, cache.mask2.as_ref());
        let act_scale = 2.0 * reg.activity / b as f64;
        for (d, h) in d_h2.iter_mut().zip(&cache.hidden2) {
            *d += act_scale * h;
        }
        relu_backward(&cache.hidden2, &mut d_h2);
        let (gw, rest) = g[8..].split_at_mut(1);
        let d_dropped1 = self.dense2.backward(&cache.dropped1, &d_h2, &mut gw[0], &mut rest[0], true).unwrap();

        let mut d_h1 = apply_mask(&d_dropped1, cache.mask1.as_ref());
        for (d, h) in d_h1.iter_mut().zip(&cache.hidden1) {
            *d += act_scale * h;
        }
        relu_backward(&cache.hidden1, &mut d_h1);
        let (gw, rest) = g[6..].split_at_mut(1);
        let d_flat = self.dense1.backward(&cache.flat, &d_h1, &mut gw[0], &mut rest[0], true).unwrap();

        let (gg, rest) = g[4..].split_at_mut(1);
        let mut d_conv2 = self.bn.backward(&cache.bn, &d_flat, &mut gg[0], &mut rest[0]);
        relu_backward(&cache.conv2.data, &mut d_conv2);
        let d_conv2 = Tensor4 { dims: cache.conv2.dims, data: d_conv2 };
        let (gk, rest) = g[2..].split_at_mut(1);
        let d_pool = self.conv2.backward(&cache.pool, &d_conv2, &mut gk[0], &mut rest[0], true).unwrap();

        let mut d_conv1 = maxpool2x2_backward(cache.conv1.dims, &cache.pool_argmax, &d_pool.data);
        relu_backward(&cache.conv1.data, &mut d_conv1.data);
        let (gk, rest) = g.split_at_mut(1);
        self.conv1.backward(&cache.input, &d_conv1, &mut gk[0], &mut rest[0], false);

        for (idx, w) in [(6, &self.dense1.weights), (8, &self.dense2.weights)] {
            for (gv, wv) in g[idx].iter_mut().zip(w.iter()) {
                *gv += 2.0 * reg.kernel * wv;
            }
        }
        for (idx, bias) in [(7, &self.dense1.bias), (9, &self.dense2.bias)] {
            for (gv, bv) in g[idx].iter_mut().zip(bias.iter()) {
                *gv += 2.0 * reg.bias * bv;
            }
        }
        Ok(Gradients(g))
    }
}

fn check_finite(values: &[f64]) -> Result<(), NnError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite)
    }
}
