//! Waveform augmentation and positive-class upsampling.

mod transforms;
mod vocoder;

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{fix_length, AudioClip, CLIP_SAMPLES};
use crate::rng;

pub use transforms::{gain, pitch_shift, shift, time_stretch, trim_silence, Trimmed, TRIM_FRAME};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("time-stretch rate {0} outside [0.1, 10]")]
    RateOutOfRange(f64),
    #[error("pitch shift of {0} semitones outside [-12, 12]")]
    SemitonesOutOfRange(f64),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("manifest has {positives} positives and {negatives} negatives; both classes are required")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
}

/// Closed interval `[lo, hi]` from which a transform parameter is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn sample(&self, rng: &mut rng::Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

/// Parameter ranges and inclusion probability of the augmentation chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub time_stretch_range: Range,
    pub pitch_shift_range: Range,
    /// Fraction of the clip length.
    pub shift_range: Range,
    pub shift_rollover: bool,
    pub trim_threshold_db: f64,
    pub gain_range_db: Range,
    /// Probability that each transform is included in a synthetic copy.
    pub probability: f64,
    /// Length every synthetic clip is re-canonicalized to.
    pub clip_samples: usize,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            time_stretch_range: Range::new(0.8, 1.25),
            pitch_shift_range: Range::new(-4.0, 4.0),
            shift_range: Range::new(-0.5, 0.5),
            shift_rollover: true,
            trim_threshold_db: 20.0,
            gain_range_db: Range::new(-12.0, 12.0),
            probability: 0.5,
            clip_samples: CLIP_SAMPLES,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let ranges = [
            ("time_stretch_range", self.time_stretch_range),
            ("pitch_shift_range", self.pitch_shift_range),
            ("shift_range", self.shift_range),
            ("gain_range_db", self.gain_range_db),
        ];
        for (name, r) in ranges {
            if !r.is_valid() {
                return Err(AugmentError::InvalidSpec(format!("{name} [{}, {}] is empty", r.lo, r.hi)));
            }
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(AugmentError::InvalidSpec(format!("probability {}", self.probability)));
        }
        if self.clip_samples == 0 {
            return Err(AugmentError::InvalidSpec("clip_samples must be positive".into()));
        }
        Ok(())
    }
}

/// One transform applied to a synthetic clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    TimeStretch(f64),
    PitchShift(f64),
    Shift { fraction: f64, rollover: bool },
    Trim(f64),
    Gain(f64),
}

impl Transform {
    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip, AugmentError> {
        match *self {
            Transform::TimeStretch(rate) => time_stretch(clip, rate),
            Transform::PitchShift(semis) => pitch_shift(clip, semis),
            Transform::Shift { fraction, rollover } => shift(clip, fraction, rollover),
            Transform::Trim(db) => Ok(trim_silence(clip, db).clip),
            Transform::Gain(db) => gain(clip, db),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::TimeStretch(r) => write!(f, "time_stretch={r:.6}"),
            Transform::PitchShift(s) => write!(f, "pitch_shift={s:.6}"),
            Transform::Shift { fraction, rollover } => {
                write!(f, "shift={fraction:.6}{}", if *rollover { "" } else { ":norollover" })
            }
            Transform::Trim(db) => write!(f, "trim={db:.6}"),
            Transform::Gain(db) => write!(f, "gain={db:.6}"),
        }
    }
}

/// Semicolon-separated `transform=param` pairs.
pub fn format_transform_log(log: &[Transform]) -> String {
    log.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
}

/// A clip with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: String,
    pub clip: AudioClip,
    pub label: u8,
    /// Identifier of the original clip a synthetic example was derived from;
    /// `None` for originals.
    pub source_id: Option<String>,
    pub transforms: Vec<Transform>,
}

impl LabeledClip {
    pub fn original(id: impl Into<String>, clip: AudioClip, label: u8) -> Self {
        Self { id: id.into(), clip, label, source_id: None, transforms: Vec::new() }
    }

    pub fn is_synthetic(&self) -> bool {
        self.source_id.is_some()
    }

    /// The original this example stems from (itself for originals).
    pub fn root_id(&self) -> &str {
        self.source_id.as_deref().unwrap_or(&self.id)
    }
}

/// Positives needed so that `positives * ratio >= negatives`.
pub fn target_positive_count(negatives: usize, ratio: f64) -> usize {
    (negatives as f64 / ratio).ceil() as usize
}

/// Draw the transform chain for copy `copy` of source positive `source`.
///
/// Every transform consumes one inclusion draw and one parameter draw
/// whether or not it is included, so the stream layout does not depend on
/// earlier outcomes.
pub fn draw_transforms(spec: &AugmentSpec, seed: u64, source: usize, copy: usize) -> Vec<Transform> {
    let mut r = rng::stream(seed, "augment", &[source as u64, copy as u64]);
    let mut chain = Vec::new();
    let mut maybe = |r: &mut rng::Rng, range: Range, make: &dyn Fn(f64) -> Transform| {
        let include = r.gen::<f64>() < spec.probability;
        let value = range.sample(r);
        if include {
            chain.push(make(value));
        }
    };
    maybe(&mut r, spec.time_stretch_range, &Transform::TimeStretch);
    maybe(&mut r, spec.pitch_shift_range, &Transform::PitchShift);
    let rollover = spec.shift_rollover;
    maybe(&mut r, spec.shift_range, &move |fraction| Transform::Shift { fraction, rollover });
    let trim_db = spec.trim_threshold_db;
    maybe(&mut r, Range::new(trim_db, trim_db), &Transform::Trim);
    maybe(&mut r, spec.gain_range_db, &Transform::Gain);
    chain
}

/// Apply a transform chain and re-canonicalize the length.
pub fn augment_clip(clip: &AudioClip, chain: &[Transform], clip_samples: usize) -> Result<AudioClip, AugmentError> {
    let mut out = clip.clone();
    for t in chain {
        out = t.apply(&out)?;
    }
    Ok(fix_length(&out, clip_samples))
}

/// `(source, copy)` pairs for the synthetic positives needed to reach
/// `ceil(negatives / ratio)` positives, with sources taken round-robin.
pub fn synthetic_plan(positives: usize, negatives: usize, ratio: f64) -> Vec<(usize, usize)> {
    if positives == 0 {
        return Vec::new();
    }
    let needed = target_positive_count(negatives, ratio).saturating_sub(positives);
    (0..needed).map(|j| (j % positives, j / positives)).collect()
}

/// Build copy `copy` of `src`, the `source`-th positive of its manifest.
pub fn make_synthetic(
    src: &LabeledClip,
    source: usize,
    copy: usize,
    spec: &AugmentSpec,
    seed: u64,
) -> Result<LabeledClip, AugmentError> {
    let chain = draw_transforms(spec, seed, source, copy);
    let clip = augment_clip(&src.clip, &chain, spec.clip_samples)?;
    Ok(LabeledClip {
        id: format!("{}~aug{}", src.id, copy),
        clip,
        label: 1,
        source_id: Some(src.root_id().to_string()),
        transforms: chain,
    })
}

/// Check an upsampling request and return the manifest indices of the
/// positives and the negative count.
pub fn upsampling_sources(
    labels: impl Iterator<Item = u8>,
    target_ratio: f64,
    spec: &AugmentSpec,
) -> Result<(Vec<usize>, usize), AugmentError> {
    spec.validate()?;
    if !(target_ratio > 0.0) {
        return Err(AugmentError::InvalidSpec(format!("target ratio {target_ratio}")));
    }
    let labels: Vec<u8> = labels.collect();
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let negatives = labels.len() - positives.len();
    if positives.is_empty() || negatives == 0 {
        return Err(AugmentError::OneClassOnly { positives: positives.len(), negatives });
    }
    Ok((positives, negatives))
}

/// Append synthetic positives until `positives >= ceil(negatives / ratio)`.
///
/// Sources are taken round-robin over the positives in manifest order.
/// Copy `c` of source `s` uses the random stream keyed by `(seed, s, c)`.
/// Originals are passed through untouched and synthetic examples are appended
/// after them.
pub fn upsample_positives(
    mut manifest: Vec<LabeledClip>,
    target_ratio: f64,
    spec: &AugmentSpec,
    seed: u64,
) -> Result<Vec<LabeledClip>, AugmentError> {
    let (positives, negatives) = upsampling_sources(manifest.iter().map(|c| c.label), target_ratio, spec)?;
    let synthetic = synthetic_plan(positives.len(), negatives, target_ratio)
        .into_iter()
        .map(|(source, copy)| make_synthetic(&manifest[positives[source]], source, copy, spec, seed))
        .collect::<Result<Vec<_>, _>>()?;
    manifest.extend(synthetic);
    Ok(manifest)
}
