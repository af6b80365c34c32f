//! Deterministic two-class synthetic corpus.
//!
//! Each clip is a few exponentially decaying noise bursts at random onsets,
//! shaped by a class-dependent spectral tilt, peak-normalized, plus a white
//! noise floor. The tilt gap between the classes scales with `separation`;
//! at zero the classes share one distribution.

use rand::Rng as _;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::augment::LabeledClip;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    /// Inclusive range of bursts per clip.
    pub burst_count: (usize, usize),
    /// Spectral tilt of each class at full separation, dB per octave.
    pub class0_tilt: f64,
    pub class1_tilt: f64,
    pub noise_floor_db: f64,
    /// Scales the tilt gap around its midpoint; in `[0, 1]`.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            clip_seconds: 7.0,
            sample_rate: SAMPLE_RATE,
            burst_count: (2, 6),
            class0_tilt: -6.0,
            class1_tilt: 3.0,
            noise_floor_db: -60.0,
            separation: 1.0,
            seed: 0,
        }
    }
}

/// Frequency the tilt is anchored to (0 dB gain).
const TILT_REFERENCE_HZ: f64 = 1000.0;
/// Bins below this frequency get the gain of this frequency.
const TILT_FLOOR_HZ: f64 = 50.0;
const PEAK: f64 = 0.5;

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_per_class == 0 {
            return bad("n_per_class must be at least 1".into());
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return bad(format!("clip_seconds {}", self.clip_seconds));
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        let (lo, hi) = self.burst_count;
        if lo == 0 || lo > hi {
            return bad(format!("burst count range ({lo}, {hi})"));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return bad(format!("separation {} outside [0, 1]", self.separation));
        }
        if self.separation > 0.0 && self.class0_tilt == self.class1_tilt {
            return bad("class tilts must differ when separation > 0".into());
        }
        if !self.noise_floor_db.is_finite() || self.noise_floor_db > 0.0 {
            return bad(format!("noise floor {} dB", self.noise_floor_db));
        }
        Ok(())
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * f64::from(self.sample_rate)).round() as usize
    }

    /// Effective tilt of `label` after applying the separation.
    pub fn tilt(&self, label: u8) -> f64 {
        let mid = (self.class0_tilt + self.class1_tilt) / 2.0;
        let full = if label == 1 { self.class1_tilt } else { self.class0_tilt };
        mid + (full - mid) * self.separation
    }
}

fn apply_tilt(signal: &mut [f64], tilt_db_per_octave: f64, sample_rate: u32) {
    let n = signal.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = signal.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = (bin as f64 * f64::from(sample_rate) / n as f64).max(TILT_FLOOR_HZ);
        let gain_db = tilt_db_per_octave * (f / TILT_REFERENCE_HZ).log2();
        *c *= 10f64.powf(gain_db / 20.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    for (s, c) in signal.iter_mut().zip(&buf) {
        *s = c.re / n as f64;
    }
}

/// Generate clip `index`; its label is `index % 2`.
pub fn generate_clip(spec: &SynthSpec, index: usize) -> LabeledClip {
    let label = (index % 2) as u8;
    let n = spec.clip_samples();
    let sr = f64::from(spec.sample_rate);
    let mut r = rng::stream(spec.seed, "synth", &[index as u64]);

    let mut signal = vec![0.0; n];
    let bursts = r.gen_range(spec.burst_count.0..=spec.burst_count.1);
    for _ in 0..bursts {
        let len = ((r.gen_range(0.1..0.4) * sr) as usize).clamp(1, n);
        let onset = r.gen_range(0..=n - len);
        let tau = r.gen_range(0.03..0.12) * sr;
        let amp = r.gen_range(0.2..1.0);
        for t in 0..len {
            let noise: f64 = r.gen_range(-1.0..1.0);
            signal[onset + t] += amp * (-(t as f64) / tau).exp() * noise;
        }
    }
    apply_tilt(&mut signal, spec.tilt(label), spec.sample_rate);
    let peak = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        signal.iter_mut().for_each(|s| *s *= PEAK / peak);
    }
    let floor = 10f64.powf(spec.noise_floor_db / 20.0);
    for s in &mut signal {
        *s += floor * r.gen_range(-1.0..1.0);
    }
    LabeledClip::original(format!("synth_{index:05}"), AudioClip::new(signal, spec.sample_rate), label)
}

/// `2 * n_per_class` clips alternating labels 0, 1, 0, 1, ...
pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<LabeledClip>, SynthError> {
    spec.validate()?;
    Ok((0..2 * spec.n_per_class).map(|i| generate_clip(spec, i)).collect())
}
