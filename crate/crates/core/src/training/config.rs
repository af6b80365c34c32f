use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::augment::{AugmentSpec, Range};
use crate::nn::{ModelConfig, Regularization};

/// Where positive upsampling happens relative to the fold split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentScope {
    /// Augment each fold's training split only; copies stay with their source.
    FoldLocal,
    /// Augment the whole corpus before splitting.
    Global,
}

/// Which model a cross-validation run hands back as its final model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalModel {
    /// The fold model with the highest validation AUC.
    BestFold,
    /// A fresh model trained on every example.
    RetrainAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub reg_kernel: f64,
    pub reg_bias: f64,
    pub reg_activity: f64,
    pub augment_enabled: bool,
    /// Negatives per positive to reach by upsampling.
    pub augment_ratio: f64,
    pub augment_scope: AugmentScope,
    pub augment: AugmentSpec,
    pub final_model: FinalModel,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 200,
            folds: 5,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            reg_kernel: 1e-4,
            reg_bias: 1e-4,
            reg_activity: 1e-5,
            augment_enabled: true,
            augment_ratio: 3.0,
            augment_scope: AugmentScope::FoldLocal,
            augment: AugmentSpec::default(),
            final_model: FinalModel::BestFold,
        }
    }
}

/// Every key accepted by [`TrainConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "learning_rate",
    "batch_size",
    "epochs",
    "folds",
    "seed",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "reg_kernel",
    "reg_bias",
    "reg_activity",
    "augment",
    "augment_ratio",
    "augment_scope",
    "final_model",
    "augment.time_stretch_min",
    "augment.time_stretch_max",
    "augment.pitch_shift_min",
    "augment.pitch_shift_max",
    "augment.shift_min",
    "augment.shift_max",
    "augment.shift_rollover",
    "augment.trim_threshold_db",
    "augment.gain_min_db",
    "augment.gain_max_db",
    "augment.probability",
];

fn invalid(key: &str, reason: impl Into<String>) -> TrainError {
    TrainError::Config { key: key.to_string(), reason: reason.into() }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value.trim().parse().map_err(|_| invalid(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, TrainError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(key, format!("expected a boolean, got {value:?}"))),
    }
}

impl TrainConfig {
    /// Set one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let a = &mut self.augment;
        match key {
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_epsilon" => self.adam_epsilon = parse(key, value)?,
            "reg_kernel" => self.reg_kernel = parse(key, value)?,
            "reg_bias" => self.reg_bias = parse(key, value)?,
            "reg_activity" => self.reg_activity = parse(key, value)?,
            "augment" => self.augment_enabled = parse_bool(key, value)?,
            "augment_ratio" => self.augment_ratio = parse(key, value)?,
            "augment_scope" => {
                self.augment_scope = match value.trim() {
                    "fold_local" => AugmentScope::FoldLocal,
                    "global" => AugmentScope::Global,
                    other => return Err(invalid(key, format!("expected fold_local or global, got {other:?}"))),
                }
            }
            "final_model" => {
                self.final_model = match value.trim() {
                    "best_fold" | "best-fold" => FinalModel::BestFold,
                    "retrain_all" | "retrain-all" => FinalModel::RetrainAll,
                    other => return Err(invalid(key, format!("expected best-fold or retrain-all, got {other:?}"))),
                }
            }
            "augment.time_stretch_min" => a.time_stretch_range.lo = parse(key, value)?,
            "augment.time_stretch_max" => a.time_stretch_range.hi = parse(key, value)?,
            "augment.pitch_shift_min" => a.pitch_shift_range.lo = parse(key, value)?,
            "augment.pitch_shift_max" => a.pitch_shift_range.hi = parse(key, value)?,
            "augment.shift_min" => a.shift_range.lo = parse(key, value)?,
            "augment.shift_max" => a.shift_range.hi = parse(key, value)?,
            "augment.shift_rollover" => a.shift_rollover = parse_bool(key, value)?,
            "augment.trim_threshold_db" => a.trim_threshold_db = parse(key, value)?,
            "augment.gain_min_db" => a.gain_range_db.lo = parse(key, value)?,
            "augment.gain_max_db" => a.gain_range_db.hi = parse(key, value)?,
            "augment.probability" => a.probability = parse(key, value)?,
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    /// Parse `key = value` lines. Blank lines and `#` comments are skipped.
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

    /// Check every field; the error names the first offending key.
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be non-negative, got {v}")))
            }
        };
        let unit = |key: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(key, format!("must lie in [0, 1), got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        if self.batch_size < 1 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if self.epochs < 1 {
            return Err(invalid("epochs", "must be at least 1"));
        }
        if self.folds < 2 {
            return Err(invalid("folds", format!("must be at least 2, got {}", self.folds)));
        }
        unit("adam_beta1", self.adam_beta1)?;
        unit("adam_beta2", self.adam_beta2)?;
        positive("adam_epsilon", self.adam_epsilon)?;
        non_negative("reg_kernel", self.reg_kernel)?;
        non_negative("reg_bias", self.reg_bias)?;
        non_negative("reg_activity", self.reg_activity)?;
        positive("augment_ratio", self.augment_ratio)?;
        let ranges: [(&str, Range); 4] = [
            ("augment.time_stretch_min", self.augment.time_stretch_range),
            ("augment.pitch_shift_min", self.augment.pitch_shift_range),
            ("augment.shift_min", self.augment.shift_range),
            ("augment.gain_min_db", self.augment.gain_range_db),
        ];
        for (key, r) in ranges {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(invalid(key, format!("range [{}, {}] is empty", r.lo, r.hi)));
            }
        }
        let ts = self.augment.time_stretch_range;
        if ts.lo < 0.1 || ts.hi > 10.0 {
            return Err(invalid("augment.time_stretch_min", "rates must lie in [0.1, 10]"));
        }
        let ps = self.augment.pitch_shift_range;
        if ps.lo < -12.0 || ps.hi > 12.0 {
            return Err(invalid("augment.pitch_shift_min", "semitones must lie in [-12, 12]"));
        }
        let sh = self.augment.shift_range;
        if sh.lo < -1.0 || sh.hi > 1.0 {
            return Err(invalid("augment.shift_min", "fractions must lie in [-1, 1]"));
        }
        let g = self.augment.gain_range_db;
        if g.lo < -40.0 || g.hi > 40.0 {
            return Err(invalid("augment.gain_min_db", "gains must lie in [-40, 40] dB"));
        }
        if !(0.0..=1.0).contains(&self.augment.probability) {
            return Err(invalid("augment.probability", "must lie in [0, 1]"));
        }
        non_negative("augment.trim_threshold_db", self.augment.trim_threshold_db)?;
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization { kernel: self.reg_kernel, bias: self.reg_bias, activity: self.reg_activity }
    }

    /// Network configuration for inputs of `frames x coeffs`.
    pub fn model_config(&self, input: crate::nn::InputShape) -> ModelConfig {
        ModelConfig { input, regularization: self.regularization(), ..ModelConfig::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn text_overrides() {
        let mut c = TrainConfig::default();
        c.apply_text("# comment\nepochs = 3\n\nfolds=4 # trailing\naugment_scope = global\naugment.probability = 1\nfinal_model = retrain-all\n")
            .unwrap();
        assert_eq!((c.epochs, c.folds), (3, 4));
        assert_eq!(c.augment_scope, AugmentScope::Global);
        assert_eq!(c.augment.probability, 1.0);
        assert_eq!(c.final_model, FinalModel::RetrainAll);
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = TrainConfig::default();
        let name = |e: TrainError| match e {
            TrainError::Config { key, .. } => key,
            other => panic!("{other}"),
        };
        assert_eq!(name(c.set("batch_size", "many").unwrap_err()), "batch_size");
        assert_eq!(name(c.set("no_such_key", "1").unwrap_err()), "no_such_key");
        c.folds = 1;
        assert_eq!(name(c.validate().unwrap_err()), "folds");
        let mut c = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert_eq!(name(c.validate().unwrap_err()), "learning_rate");
        c.learning_rate = 1e-3;
        c.augment.time_stretch_range = Range::new(2.0, 1.0);
        assert_eq!(name(c.validate().unwrap_err()), "augment.time_stretch_min");
    }

    #[test]
    fn every_listed_key_is_settable() {
        let samples = [("augment_scope", "fold_local"), ("final_model", "best-fold")];
        for key in CONFIG_KEYS {
            let value = samples
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .unwrap_or(if key.contains("rollover") || *key == "augment" { "true" } else { "1" });
            TrainConfig::default().set(key, value).unwrap();
        }
    }
}
