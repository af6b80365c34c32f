//! Layered configuration: defaults, then a `key = value` file, then
//! environment variables, then command-line flags.

use coughnet::features::FeatureConfig;
use coughnet::training::{TrainConfig, TrainError};
use serde::{Deserialize, Serialize};

/// Feature-extraction keys, set as `features.<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub clip_seconds: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        let d = FeatureConfig::default();
        Self {
            clip_seconds: d.clip_samples as f64 / f64::from(d.sample_rate),
            n_fft: d.n_fft,
            hop: d.hop,
            n_mels: d.n_mels,
            n_mfcc: d.n_mfcc,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub training: TrainConfig,
    pub features: FeatureSettings,
}

/// Environment prefixes and the key namespace each maps to.
pub const ENV_PREFIXES: [(&str, &str); 3] = [("TRAINING_", ""), ("AUGMENT_", "augment."), ("FEATURES_", "features.")];

fn invalid(key: &str, reason: impl Into<String>) -> TrainError {
    TrainError::Config { key: key.to_string(), reason: reason.into() }
}

impl Settings {
    /// Set one key. `features.*` keys configure extraction; everything else
    /// (optionally prefixed `training.`) goes to the training config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        if let Some(field) = key.strip_prefix("features.") {
            let f = &mut self.features;
            let v = value.trim();
            let bad = || invalid(key, format!("cannot parse {value:?}"));
            match field {
                "clip_seconds" => f.clip_seconds = v.parse().map_err(|_| bad())?,
                "n_fft" => f.n_fft = v.parse().map_err(|_| bad())?,
                "hop" => f.hop = v.parse().map_err(|_| bad())?,
                "n_mels" => f.n_mels = v.parse().map_err(|_| bad())?,
                "n_mfcc" => f.n_mfcc = v.parse().map_err(|_| bad())?,
                _ => return Err(invalid(key, "unknown key")),
            }
            return Ok(());
        }
        let key = key.strip_prefix("training.").unwrap_or(key);
        self.training.set(key, value)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), TrainError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(line, format!("line {} is not `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply `TRAINING_*`, `AUGMENT_*` and `FEATURES_*` variables, e.g.
    /// `TRAINING_LEARNING_RATE` or `AUGMENT_PROBABILITY`. Variables are
    /// applied in name order.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), TrainError> {
        let mut matched: Vec<(String, String, String)> = vars
            .into_iter()
            .filter_map(|(name, value)| {
                ENV_PREFIXES.iter().find_map(|(prefix, ns)| {
                    name.strip_prefix(prefix)
                        .map(|rest| (name.clone(), format!("{ns}{}", rest.to_ascii_lowercase()), value.clone()))
                })
            })
            .collect();
        matched.sort();
        for (name, key, value) in matched {
            self.set(&key, &value).map_err(|e| match e {
                TrainError::Config { key, reason } => invalid(&key, format!("{reason} (from ${name})")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        let d = FeatureConfig::default();
        FeatureConfig {
            clip_samples: (self.features.clip_seconds * f64::from(d.sample_rate)).round() as usize,
            n_fft: self.features.n_fft,
            hop: self.features.hop,
            n_mels: self.features.n_mels,
            n_mfcc: self.features.n_mfcc,
            ..d
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.training.validate()?;
        let f = &self.features;
        if !(f.clip_seconds > 0.0 && f.clip_seconds.is_finite()) {
            return Err(invalid("features.clip_seconds", "must be positive"));
        }
        if f.n_fft < 2 || f.hop == 0 {
            return Err(invalid("features.n_fft", "n_fft must be at least 2 and hop positive"));
        }
        if f.n_mfcc == 0 || f.n_mfcc > f.n_mels {
            return Err(invalid("features.n_mfcc", "must be between 1 and n_mels"));
        }
        coughnet::FeatureExtractor::new(self.feature_config()).map_err(|e| invalid("features.n_fft", e.to_string()))?;
        Ok(())
    }
}
