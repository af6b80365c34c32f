//! Layer kernels over NHWC tensors and row-major matrices.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor4};
use crate::rng::Rng;

/// 2-D convolution kernel, stride 1, valid padding, cross-correlation
/// convention. Kernel layout is `(kh, kw, in_channels, out_channels)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub kh: usize,
    pub kw: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(kh: usize, kw: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kh,
            kw,
            in_channels,
            out_channels,
            kernel: vec![0.0; kh * kw * in_channels * out_channels],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.kh * self.kw * self.in_channels
    }

    pub fn output_dims(&self, x: [usize; 4]) -> Result<[usize; 4], NnError> {
        let [b, h, w, c] = x;
        if c != self.in_channels || h < self.kh || w < self.kw {
            return Err(NnError::ShapeMismatch(format!(
                "conv {}x{}x{}x{} cannot take input {:?}",
                self.kh, self.kw, self.in_channels, self.out_channels, x
            )));
        }
        Ok([b, h - self.kh + 1, w - self.kw + 1, self.out_channels])
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        let dims = self.output_dims(x.dims)?;
        let [b, oh, ow, co] = dims;
        let [_, h, w, ci] = x.dims;
        let mut out = Tensor4::zeros(dims);
        for n in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    let o = &mut out.data[((n * oh + i) * ow + j) * co..][..co];
                    o.copy_from_slice(&self.bias);
                    for di in 0..self.kh {
                        for dj in 0..self.kw {
                            let xin = &x.data[((n * h + i + di) * w + j + dj) * ci..][..ci];
                            let kbase = (di * self.kw + dj) * ci;
                            for (c, &xv) in xin.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let k = &self.kernel[(kbase + c) * co..][..co];
                                for (ov, kv) in o.iter_mut().zip(k) {
                                    *ov += xv * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates kernel and bias gradients; returns the input gradient
    /// when `want_input_grad`.
    pub fn backward(
        &self,
        x: &Tensor4,
        grad_out: &Tensor4,
        grad_kernel: &mut [f64],
        grad_bias: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Tensor4> {
        let [b, oh, ow, co] = grad_out.dims;
        let [_, h, w, ci] = x.dims;
        let mut grad_in = want_input_grad.then(|| Tensor4::zeros(x.dims));
        for n in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    let g = &grad_out.data[((n * oh + i) * ow + j) * co..][..co];
                    for (gb, gv) in grad_bias.iter_mut().zip(g) {
                        *gb += gv;
                    }
                    for di in 0..self.kh {
                        for dj in 0..self.kw {
                            let xoff = ((n * h + i + di) * w + j + dj) * ci;
                            let kbase = (di * self.kw + dj) * ci;
                            for c in 0..ci {
                                let xv = x.data[xoff + c];
                                let kidx = (kbase + c) * co;
                                if xv != 0.0 {
                                    for (gk, gv) in grad_kernel[kidx..kidx + co].iter_mut().zip(g) {
                                        *gk += xv * gv;
                                    }
                                }
                                if let Some(gi) = grad_in.as_mut() {
                                    let k = &self.kernel[kidx..kidx + co];
                                    gi.data[xoff + c] += k.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                                }
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }
}

/// 2x2 max pooling with stride 2. Odd trailing rows and columns are dropped.
/// Returns the pooled tensor and, per output, the flat input index of the
/// selected element (first maximum in row-major window order).
pub fn maxpool2x2(x: &Tensor4) -> (Tensor4, Vec<usize>) {
    let [b, h, w, c] = x.dims;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([b, oh, ow, c]);
    let mut argmax = vec![0usize; out.data.len()];
    for n in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best_idx = ((n * h + 2 * i) * w + 2 * j) * c + ch;
                    let mut best = x.data[best_idx];
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((n * h + 2 * i + di) * w + 2 * j + dj) * c + ch;
                        if x.data[idx] > best {
                            best = x.data[idx];
                            best_idx = idx;
                        }
                    }
                    let o = ((n * oh + i) * ow + j) * c + ch;
                    out.data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2x2_backward(input_dims: [usize; 4], argmax: &[usize], grad_out: &[f64]) -> Tensor4 {
    let mut g = Tensor4::zeros(input_dims);
    for (&idx, &v) in argmax.iter().zip(grad_out) {
        g.data[idx] += v;
    }
    g
}

/// Per-channel batch normalization over `(batch, height, width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    /// Number of running-statistic updates applied; zero means the running
    /// statistics are still at their initial values.
    pub updates: u64,
}

/// Values a training-mode batch-norm pass keeps for backpropagation.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            epsilon,
            updates: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor4) -> Result<(), NnError> {
        if x.dims[3] != self.channels() {
            return Err(NnError::ShapeMismatch(format!(
                "batch norm over {} channels got input {:?}",
                self.channels(),
                x.dims
            )));
        }
        Ok(())
    }

    pub fn forward_train(&self, x: &Tensor4) -> Result<(Tensor4, BatchNormCache), NnError> {
        self.check(x)?;
        let c = self.channels();
        let count = (x.data.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for row in x.data.chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for row in x.data.chunks_exact(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= count);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut normalized = vec![0.0; x.data.len()];
        let mut out = Tensor4::zeros(x.dims);
        for ((xr, nr), or) in
            x.data.chunks_exact(c).zip(normalized.chunks_exact_mut(c)).zip(out.data.chunks_exact_mut(c))
        {
            for ch in 0..c {
                nr[ch] = (xr[ch] - mean[ch]) * inv_std[ch];
                or[ch] = self.gamma[ch] * nr[ch] + self.beta[ch];
            }
        }
        Ok((out, BatchNormCache { normalized, inv_std, batch_mean: mean, batch_var: var }))
    }

    pub fn forward_infer(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        self.check(x)?;
        if self.updates == 0 {
            return Err(NnError::InferBeforeTrain);
        }
        let c = self.channels();
        let scale: Vec<f64> = (0..c).map(|ch| self.gamma[ch] / (self.running_var[ch] + self.epsilon).sqrt()).collect();
        let mut out = x.clone();
        for row in out.data.chunks_exact_mut(c) {
            for ch in 0..c {
                row[ch] = (row[ch] - self.running_mean[ch]) * scale[ch] + self.beta[ch];
            }
        }
        Ok(out)
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        for ch in 0..self.channels() {
            self.running_mean[ch] =
                self.momentum * self.running_mean[ch] + (1.0 - self.momentum) * cache.batch_mean[ch];
            self.running_var[ch] = self.momentum * self.running_var[ch] + (1.0 - self.momentum) * cache.batch_var[ch];
        }
        self.updates += 1;
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        grad_out: &[f64],
        grad_gamma: &mut [f64],
        grad_beta: &mut [f64],
    ) -> Vec<f64> {
        let c = self.channels();
        let count = (grad_out.len() / c) as f64;
        let mut sum_dxhat = vec![0.0; c];
        let mut sum_dxhat_xhat = vec![0.0; c];
        for (g, xh) in grad_out.chunks_exact(c).zip(cache.normalized.chunks_exact(c)) {
            for ch in 0..c {
                grad_gamma[ch] += g[ch] * xh[ch];
                grad_beta[ch] += g[ch];
                let dxhat = g[ch] * self.gamma[ch];
                sum_dxhat[ch] += dxhat;
                sum_dxhat_xhat[ch] += dxhat * xh[ch];
            }
        }
        let mut grad_in = vec![0.0; grad_out.len()];
        for ((gi, g), xh) in
            grad_in.chunks_exact_mut(c).zip(grad_out.chunks_exact(c)).zip(cache.normalized.chunks_exact(c))
        {
            for ch in 0..c {
                let dxhat = g[ch] * self.gamma[ch];
                gi[ch] = cache.inv_std[ch] / count * (count * dxhat - sum_dxhat[ch] - xh[ch] * sum_dxhat_xhat[ch]);
            }
        }
        grad_in
    }
}

/// Fully connected layer; `weights` is row-major `n_in x n_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    /// `x * W + b` for `x` of shape `batch x n_in`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>, NnError> {
        if x.len() != batch * self.n_in {
            return Err(NnError::ShapeMismatch(format!(
                "dense {}x{} got {} values for batch {batch}",
                self.n_in,
                self.n_out,
                x.len()
            )));
        }
        let mut out = Vec::with_capacity(batch * self.n_out);
        for row in x.chunks_exact(self.n_in) {
            let mut o = self.bias.clone();
            for (i, &xv) in row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let w = &self.weights[i * self.n_out..(i + 1) * self.n_out];
                for (ov, wv) in o.iter_mut().zip(w) {
                    *ov += xv * wv;
                }
            }
            out.extend_from_slice(&o);
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        for (row, g) in x.chunks_exact(self.n_in).zip(grad_out.chunks_exact(self.n_out)) {
            for (gb, gv) in grad_b.iter_mut().zip(g) {
                *gb += gv;
            }
            for (i, &xv) in row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (gw, gv) in grad_w[i * self.n_out..(i + 1) * self.n_out].iter_mut().zip(g) {
                    *gw += xv * gv;
                }
            }
        }
        want_input_grad.then(|| {
            let mut gi = Vec::with_capacity(x.len());
            for g in grad_out.chunks_exact(self.n_out) {
                for i in 0..self.n_in {
                    let w = &self.weights[i * self.n_out..(i + 1) * self.n_out];
                    gi.push(w.iter().zip(g).map(|(a, b)| a * b).sum());
                }
            }
            gi
        })
    }
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Zero the gradient wherever the ReLU output was not positive.
pub fn relu_backward(output: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Logistic function, evaluated without overflow and kept strictly inside
/// (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Inverted dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}
