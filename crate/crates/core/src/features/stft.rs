//! Centered short-time Fourier transform and its overlap-add inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Index into a signal extended by even reflection about its end samples
/// (the edge sample itself is not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Number of centered frames for a signal of `len` samples.
pub fn n_frames(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Power spectrogram: `n_bins x n_frames`, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub n_fft: usize,
    pub hop: usize,
    pub n_bins: usize,
    pub n_frames: usize,
    data: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Planned forward and inverse transforms for one frame size and hop.
#[derive(Clone)]
pub struct Stft {
    pub n_fft: usize,
    pub hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("n_fft", &self.n_fft).field("hop", &self.hop).finish()
    }
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        assert!(n_fft >= 2 && hop >= 1);
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann_periodic(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Windowed frame `k`, centered on sample `k * hop` of the
    /// reflection-padded signal.
    pub fn windowed_frame(&self, signal: &[f64], k: usize) -> Vec<f64> {
        let half = (self.n_fft / 2) as isize;
        let start = (k * self.hop) as isize - half;
        (0..self.n_fft).map(|j| signal[reflect_index(start + j as isize, signal.len())] * self.window[j]).collect()
    }

    /// Positive-frequency spectrum of a real frame of length `n_fft`.
    pub fn spectrum(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n_bins());
        buf
    }

    /// Complex STFT, one `Vec` of `n_bins` per frame.
    pub fn analyze(&self, signal: &[f64]) -> Vec<Vec<Complex64>> {
        assert!(!signal.is_empty(), "cannot analyze an empty signal");
        (0..n_frames(signal.len(), self.hop)).map(|k| self.spectrum(&self.windowed_frame(signal, k))).collect()
    }

    pub fn power(&self, signal: &[f64]) -> Spectrogram {
        let frames = self.analyze(signal);
        let n_bins = self.n_bins();
        let data = frames.iter().flat_map(|f| f.iter().map(|c| c.norm_sqr())).collect();
        Spectrogram { n_fft: self.n_fft, hop: self.hop, n_bins, n_frames: frames.len(), data }
    }

    /// Inverse STFT by windowed overlap-add with squared-window
    /// normalization, trimmed or zero-padded to `length` samples.
    pub fn synthesize(&self, frames: &[Vec<Complex64>], length: usize) -> Vec<f64> {
        let n = self.n_fft;
        let half = n / 2;
        let total = n + self.hop * frames.len().saturating_sub(1);
        let mut out = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, spec) in frames.iter().enumerate() {
            // rebuild the Hermitian-symmetric full spectrum
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < spec.len() { spec[i] } else { spec[n - i].conj() };
            }
            buf[0].im = 0.0;
            if n.is_multiple_of(2) {
                buf[half].im = 0.0;
            }
            self.inverse.process(&mut buf);
            let off = k * self.hop;
            for j in 0..n {
                let w = self.window[j];
                out[off + j] += buf[j].re / n as f64 * w;
                norm[off + j] += w * w;
            }
        }
        let mut y: Vec<f64> =
            out.iter().zip(&norm).skip(half).map(|(&v, &w)| if w > 1e-10 { v / w } else { 0.0 }).collect();
        y.resize(length, 0.0);
        y
    }
}
