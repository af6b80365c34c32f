//! MFCC extraction: centered Hann STFT, mel filterbank, log compression and
//! an orthonormal DCT-II along the mel axis.

mod cache;
mod mel;
pub mod stft;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};

pub use cache::{read_feature_file, write_feature_file, CACHE_MAGIC, CACHE_VERSION};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{Spectrogram, Stft};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip has {actual} samples, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("clip sample rate {actual} Hz, expected {expected} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("feature cache: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Geometry and constants of the feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub clip_samples: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            clip_samples: CLIP_SAMPLES,
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            n_mfcc: 15,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    /// Same pipeline on clips of `seconds` length (frame count scales).
    pub fn with_clip_seconds(seconds: f64) -> Self {
        let mut cfg = Self::default();
        cfg.clip_samples = (seconds * f64::from(cfg.sample_rate)).round() as usize;
        cfg
    }

    pub fn n_frames(&self) -> usize {
        stft::n_frames(self.clip_samples, self.hop)
    }
}

/// MFCC matrix of one clip, `n_mfcc` rows by `n_frames` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_mfcc: usize,
    pub n_frames: usize,
    /// Row-major: coefficient `c` of frame `t` is at `c * n_frames + t`.
    pub coefficients: Vec<f64>,
    pub source_id: String,
}

impl FeatureMatrix {
    pub fn get(&self, coeff: usize, frame: usize) -> f64 {
        self.coefficients[coeff * self.n_frames + frame]
    }

    /// Transposed copy, frames as rows (the network's input layout).
    pub fn time_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.coefficients.len()];
        for c in 0..self.n_mfcc {
            for t in 0..self.n_frames {
                out[t * self.n_mfcc + c] = self.coefficients[c * self.n_frames + t];
            }
        }
        out
    }
}

/// Orthonormal DCT-II matrix (`n x n`, row-major); row `k` is basis `k`.
pub fn dct2_orthonormal(n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            g[k * n + i] = scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    g
}

/// Precomputed transforms shared read-only across clips.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    stft: Stft,
    filterbank: Arc<MelFilterbank>,
    dct: Arc<Vec<f64>>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self, FeatureError> {
        if config.n_mfcc == 0 || config.n_mfcc > config.n_mels {
            return Err(FeatureError::Domain(format!("n_mfcc {} must be in 1..={}", config.n_mfcc, config.n_mels)));
        }
        if config.clip_samples <= config.n_fft / 2 {
            return Err(FeatureError::Domain(format!(
                "clip of {} samples is too short for n_fft {}",
                config.clip_samples, config.n_fft
            )));
        }
        let filterbank = MelFilterbank::new(config.n_mels, config.n_fft, config.sample_rate)?;
        Ok(Self {
            stft: Stft::new(config.n_fft, config.hop),
            dct: Arc::new(dct2_orthonormal(config.n_mels)),
            filterbank: Arc::new(filterbank),
            config,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    fn check(&self, clip: &AudioClip) -> Result<(), FeatureError> {
        if clip.sample_rate != self.config.sample_rate {
            return Err(FeatureError::RateMismatch { expected: self.config.sample_rate, actual: clip.sample_rate });
        }
        if clip.len() != self.config.clip_samples {
            return Err(FeatureError::LengthMismatch { expected: self.config.clip_samples, actual: clip.len() });
        }
        Ok(())
    }

    /// Power spectrogram of a canonical clip.
    pub fn stft_power(&self, clip: &AudioClip) -> Result<Spectrogram, FeatureError> {
        self.check(clip)?;
        Ok(self.stft.power(&clip.samples))
    }

    pub fn mfcc(&self, clip: &AudioClip, source_id: &str) -> Result<FeatureMatrix, FeatureError> {
        let spec = self.stft_power(clip)?;
        let (n_mels, n_mfcc, n_frames) = (self.config.n_mels, self.config.n_mfcc, spec.n_frames);
        let mut coefficients = vec![0.0; n_mfcc * n_frames];
        let mut mel = vec![0.0; n_mels];
        for t in 0..n_frames {
            self.filterbank.apply(spec.frame(t), &mut mel);
            for v in mel.iter_mut() {
                *v = v.max(self.config.log_floor).ln();
            }
            for c in 0..n_mfcc {
                let basis = &self.dct[c * n_mels..(c + 1) * n_mels];
                coefficients[c * n_frames + t] = basis.iter().zip(&mel).map(|(g, m)| g * m).sum();
            }
        }
        Ok(FeatureMatrix { n_mfcc, n_frames, coefficients, source_id: source_id.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rustfft::num_complex::Complex64;

    fn extractor() -> FeatureExtractor {
        FeatureExtractor::new(FeatureConfig::default()).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    /// O(N^2) DFT used as an independent reference for the FFT path.
    fn direct_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (t, &v)| {
                    let ang = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                    acc + Complex64::new(v * ang.cos(), v * ang.sin())
                })
            })
            .collect()
    }

    #[test]
    fn zero_clip_spectrogram() {
        let ex = extractor();
        let spec = ex.stft_power(&AudioClip::new(vec![0.0; CLIP_SAMPLES], SAMPLE_RATE)).unwrap();
        assert_eq!((spec.n_bins, spec.n_frames), (1025, 302));
        assert!(spec.values().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let ex = extractor();
        for k in [10usize, 93, 400] {
            let f = k as f64 * 22050.0 / 2048.0;
            let x: Vec<f64> =
                (0..CLIP_SAMPLES).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 22050.0).sin()).collect();
            let spec = ex.stft_power(&AudioClip::new(x, SAMPLE_RATE)).unwrap();
            for t in 2..spec.n_frames - 2 {
                let frame = spec.frame(t);
                let argmax = (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
                assert_eq!(argmax, k, "frame {t}");
            }
        }
    }

    #[test]
    fn length_and_rate_are_checked() {
        let ex = extractor();
        let err = ex.stft_power(&AudioClip::new(vec![0.0; 1000], SAMPLE_RATE)).unwrap_err();
        assert!(matches!(err, FeatureError::LengthMismatch { expected: CLIP_SAMPLES, actual: 1000 }));
        let err = ex.mfcc(&AudioClip::new(vec![0.0; CLIP_SAMPLES], 16000), "x").unwrap_err();
        assert!(matches!(err, FeatureError::RateMismatch { .. }));
    }

    #[test]
    fn fft_matches_direct_dft_and_parseval() {
        let ex = extractor();
        let x = noise(CLIP_SAMPLES, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..4 {
            let k = rng.gen_range(0..302);
            let frame = ex.stft.windowed_frame(&x, k);
            let fast = ex.stft.spectrum(&frame);
            let slow = direct_dft(&frame);
            let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() / scale < 1e-8);
            }
            // Parseval over the full (two-sided) spectrum
            let energy: f64 = frame.iter().map(|v| v * v).sum();
            let n = frame.len();
            let spectral: f64 =
                (0..n).map(|i| if i <= n / 2 { fast[i].norm_sqr() } else { fast[n - i].norm_sqr() }).sum::<f64>()
                    / n as f64;
            assert!((energy - spectral).abs() / energy < 1e-8);
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let n = 128;
        let g = dct2_orthonormal(n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| g[i * n + k] * g[j * n + k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_clip_mfcc_is_constant_log_floor() {
        let ex = extractor();
        let m = ex.mfcc(&AudioClip::new(vec![0.0; CLIP_SAMPLES], SAMPLE_RATE), "silence").unwrap();
        assert_eq!((m.n_mfcc, m.n_frames), (15, 302));
        let c0 = 128f64.sqrt() * 1e-10f64.ln();
        for t in 0..302 {
            assert!((m.get(0, t) - c0).abs() < 1e-9);
            for c in 1..15 {
                assert!(m.get(c, t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gain_moves_only_the_zeroth_coefficient() {
        let ex = extractor();
        let x = noise(CLIP_SAMPLES, 11);
        let base = ex.mfcc(&AudioClip::new(x.clone(), SAMPLE_RATE), "a").unwrap();
        for g in [0.25, 3.0] {
            let scaled = ex.mfcc(&AudioClip::new(x.iter().map(|v| v * g).collect(), SAMPLE_RATE), "b").unwrap();
            let shift = 128f64.sqrt() * (g * g).ln();
            for t in 0..base.n_frames {
                assert!((scaled.get(0, t) - base.get(0, t) - shift).abs() < 1e-9);
                for c in 1..15 {
                    assert!((scaled.get(c, t) - base.get(c, t)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn time_major_transposes() {
        let m = FeatureMatrix {
            n_mfcc: 2,
            n_frames: 3,
            coefficients: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            source_id: "t".into(),
        };
        assert_eq!(m.time_major(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn scaled_geometry() {
        let ex = FeatureExtractor::new(FeatureConfig::with_clip_seconds(2.0)).unwrap();
        let m = ex.mfcc(&AudioClip::new(noise(44_100, 1), SAMPLE_RATE), "s").unwrap();
        assert_eq!((m.n_mfcc, m.n_frames), (15, 87));
        assert!(m.coefficients.iter().all(|v| v.is_finite()));
    }
}
