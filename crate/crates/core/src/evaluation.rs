//! ROC analysis, AUC, sensitivity-anchored confusion matrices and
//! cross-fold aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need both classes, got {positives} positive and {negatives} negative examples")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    LabelOutOfDomain(u8),
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("no reports to average")]
    Empty,
}

/// Operating points swept over every distinct score, highest first.
///
/// `thresholds[0]` is `+inf` (nothing predicted positive); the last point is
/// always (1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.fpr.iter().zip(&self.tpr).map(|(&f, &t)| [f, t]).collect()
    }
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::LabelOutOfDomain(bad));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::OneClassOnly { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Counts of (true positives, false positives) at each distinct threshold,
/// highest first, predicting positive when `score >= threshold`.
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve, EvalError> {
    let (p, n) = validate(scores, labels)?;
    let mut curve = RocCurve { fpr: vec![0.0], tpr: vec![0.0], thresholds: vec![f64::INFINITY] };
    for (s, tp, fp) in sweep(scores, labels) {
        curve.fpr.push(fp as f64 / n as f64);
        curve.tpr.push(tp as f64 / p as f64);
        curve.thresholds.push(s);
    }
    Ok(curve)
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve.fpr.windows(2).zip(curve.tpr.windows(2)).map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0).sum()
}

pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    Ok(auc(&roc_curve(scores, labels)?))
}

/// Binary confusion counts. Real-valued so averages across folds fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl ConfusionMatrix {
    pub fn sensitivity(&self) -> f64 {
        self.tp / (self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        self.tn / (self.tn + self.fp)
    }
}

/// Confusion matrix when predicting positive iff `score >= threshold`.
pub fn confusion_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => m.tp += 1.0,
            (true, false) => m.fp += 1.0,
            (false, false) => m.tn += 1.0,
            (false, true) => m.fn_ += 1.0,
        }
    }
    m
}

/// The largest threshold whose sensitivity reaches `target_tpr`, and the
/// confusion matrix there.
pub fn confusion_at_sensitivity(
    scores: &[f64],
    labels: &[u8],
    target_tpr: f64,
) -> Result<(f64, ConfusionMatrix), EvalError> {
    let (p, _) = validate(scores, labels)?;
    let needed = target_tpr * p as f64 - 1e-9;
    let points = sweep(scores, labels);
    let threshold = points
        .iter()
        .find(|&&(_, tp, _)| tp as f64 >= needed)
        .map(|&(s, _, _)| s)
        // unreachable for target <= 1: the lowest threshold has tp == p
        .unwrap_or(points.last().unwrap().0);
    Ok((threshold, confusion_at_threshold(scores, labels, threshold)))
}

/// Fraction of examples classified correctly at `threshold`.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let m = confusion_at_threshold(scores, labels, threshold);
    (m.tp + m.tn) / scores.len() as f64
}

/// Metrics of one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold: usize,
    pub auc: f64,
    /// Accuracy at the 0.5 probability threshold.
    pub accuracy: f64,
    pub threshold_80: f64,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<[f64; 2]>,
    /// Threshold of each ROC point; the first is `+inf`.
    #[serde(skip)]
    pub roc_thresholds: Vec<f64>,
}

pub const TARGET_SENSITIVITY: f64 = 0.8;

pub fn evaluate(fold: usize, scores: &[f64], labels: &[u8]) -> Result<EvalReport, EvalError> {
    let curve = roc_curve(scores, labels)?;
    let (threshold_80, confusion) = confusion_at_sensitivity(scores, labels, TARGET_SENSITIVITY)?;
    Ok(EvalReport {
        fold,
        auc: auc(&curve),
        accuracy: accuracy(scores, labels, 0.5),
        threshold_80,
        confusion,
        roc: curve.points(),
        roc_thresholds: curve.thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub mean_confusion: ConfusionMatrix,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Element-wise mean confusion and mean / sample standard deviation of AUC
/// and accuracy.
pub fn average_reports(reports: &[EvalReport]) -> Result<Aggregate, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = reports.len() as f64;
    let aucs: Vec<f64> = reports.iter().map(|r| r.auc).collect();
    let accs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let (mean_auc, sd_auc) = mean_sd(&aucs);
    let (mean_accuracy, sd_accuracy) = mean_sd(&accs);
    let mut c = ConfusionMatrix::default();
    for r in reports {
        c.tp += r.confusion.tp;
        c.fp += r.confusion.fp;
        c.tn += r.confusion.tn;
        c.fn_ += r.confusion.fn_;
    }
    let mean_confusion = ConfusionMatrix { tp: c.tp / n, fp: c.fp / n, tn: c.tn / n, fn_: c.fn_ / n };
    Ok(Aggregate { mean_auc, sd_auc, mean_accuracy, sd_accuracy, mean_confusion })
}

/// Per-fold reports plus their aggregate, as written to the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub aggregate: Aggregate,
}

impl CvReport {
    pub fn new(folds: Vec<EvalReport>) -> Result<Self, EvalError> {
        let aggregate = average_reports(&folds)?;
        Ok(Self { folds, aggregate })
    }
}
