use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, bce_loss, stratified_kfold, AdamConfig, AdamState, AugmentScope, FinalModel, FoldPlan, TrainConfig,
    TrainError,
};
use crate::augment::{make_synthetic, synthetic_plan, upsampling_sources, AugmentSpec, LabeledClip};
use crate::evaluation::{evaluate, roc_auc, CvReport, EvalReport};
use crate::features::FeatureExtractor;
use crate::nn::{InputShape, ModelParams, Tensor4};
use crate::rng;

/// A featurized example, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    /// Identifier of the original recording (equal to `id` for originals).
    pub root_id: String,
    pub label: u8,
    /// Time-major `frames x coeffs` matrix.
    pub features: Vec<f64>,
}

/// Turns clips into network inputs.
pub trait Featurizer {
    fn input_shape(&self) -> InputShape;
    fn featurize(&mut self, clip: &LabeledClip) -> Result<Vec<f64>, TrainError>;
}

impl Featurizer for FeatureExtractor {
    fn input_shape(&self) -> InputShape {
        InputShape { frames: self.config().n_frames(), coeffs: self.config().n_mfcc }
    }

    fn featurize(&mut self, clip: &LabeledClip) -> Result<Vec<f64>, TrainError> {
        Ok(self.mfcc(&clip.clip, &clip.id)?.time_major())
    }
}

fn to_example(clip: &LabeledClip, featurizer: &mut dyn Featurizer) -> Result<Example, TrainError> {
    Ok(Example {
        id: clip.id.clone(),
        root_id: clip.root_id().to_string(),
        label: clip.label,
        features: featurizer.featurize(clip)?,
    })
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub steps: u64,
}

fn batch_tensor(input: InputShape, examples: &[&Example]) -> Result<Tensor4, TrainError> {
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
    Ok(Tensor4::from_examples(input.frames, input.coeffs, &rows)?)
}

/// Probabilities for `examples` in inference mode.
pub fn predict(params: &ModelParams, examples: &[&Example]) -> Result<Vec<f64>, TrainError> {
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
    Ok(params.predict_examples(&rows, 32)?)
}

/// Visiting order of `n` training examples in `epoch` of the run keyed by
/// `key`.
pub fn epoch_order(n: usize, seed: u64, key: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "shuffle", &[key, epoch as u64]));
    order
}

/// Train one model from scratch.
///
/// `key` separates the random streams of different folds. Each epoch visits
/// the training examples in a fresh permutation; the trailing partial batch
/// is kept. Validation metrics are recorded when `validation` is non-empty.
pub fn train_fold(
    training: &[&Example],
    validation: &[&Example],
    config: &TrainConfig,
    input: InputShape,
    key: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if training.is_empty() {
        return Err(TrainError::Empty("training split".into()));
    }
    let key = key as u64;
    let mut params = ModelParams::init(config.model_config(input), config.seed, key)?;
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        epsilon: config.adam_epsilon,
    };
    let val_labels: Vec<u8> = validation.iter().map(|e| e.label).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let order = epoch_order(training.len(), config.seed, key, epoch);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| training[i]).collect();
            let labels: Vec<u8> = batch.iter().map(|e| e.label).collect();
            let x = batch_tensor(input, &batch)?;
            let mut dropout = rng::stream(config.seed, "dropout", &[key, epoch as u64, step as u64]);
            let cache = params.forward_train(&x, Some(&mut dropout))?;
            let (data_loss, upstream) = bce_loss(&cache.probabilities, &labels)?;
            let loss = data_loss + params.penalty(&cache);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            loss_sum += loss * batch.len() as f64;
            let grads = params.backward(&cache, &upstream)?;
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
            params.update_batch_stats(&cache);
        }

        let (val_loss, val_auc) = if validation.is_empty() {
            (None, None)
        } else {
            let scores = predict(&params, validation)?;
            let (l, _) = bce_loss(&scores, &val_labels)?;
            (Some(l), roc_auc(&scores, &val_labels).ok())
        };
        let record = EpochRecord {
            fold: key as usize,
            epoch: epoch + 1,
            train_loss: loss_sum / training.len() as f64,
            val_loss,
            val_auc,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainedModel { params, history, steps: adam.t })
}

/// One trained fold of a cross-validation run.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub model: TrainedModel,
    pub report: EvalReport,
    pub training_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub validation_scores: Vec<f64>,
    pub validation_labels: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub report: CvReport,
    pub final_model: ModelParams,
    /// `"fold N"` or `"retrain-all"`.
    pub final_source: String,
}

fn synthesize(
    clips: &[&LabeledClip],
    config: &TrainConfig,
    seed: u64,
    featurizer: &mut dyn Featurizer,
) -> Result<Vec<Example>, TrainError> {
    if !config.augment_enabled {
        return Ok(Vec::new());
    }
    let (positives, negatives) =
        upsampling_sources(clips.iter().map(|c| c.label), config.augment_ratio, &config.augment)?;
    // synthetic copies keep the length of the clips they come from
    let spec = AugmentSpec { clip_samples: clips[positives[0]].clip.len(), ..config.augment.clone() };
    synthetic_plan(positives.len(), negatives, config.augment_ratio)
        .into_iter()
        .map(|(source, copy)| {
            let clip = make_synthetic(clips[positives[source]], source, copy, &spec, seed)?;
            to_example(&clip, featurizer)
        })
        .collect()
}

/// Stratified k-fold cross-validation over `corpus` (original clips only).
///
/// With [`AugmentScope::FoldLocal`] each fold's training originals are
/// upsampled separately and validation sets hold originals only. With
/// [`AugmentScope::Global`] the whole corpus is upsampled before the split.
/// A `plan` over the corpus replaces the stratified split (fold-local scope
/// only).
pub fn run_cv(
    corpus: &[LabeledClip],
    config: &TrainConfig,
    plan: Option<FoldPlan>,
    featurizer: &mut dyn Featurizer,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<CvOutcome, TrainError> {
    config.validate()?;
    if let Some(c) = corpus.iter().find(|c| c.is_synthetic()) {
        return Err(TrainError::Config {
            key: "manifest".into(),
            reason: format!("{} is synthetic; pass original clips only", c.id),
        });
    }
    let input = featurizer.input_shape();
    let clips: Vec<&LabeledClip> = corpus.iter().collect();
    let k = config.folds;

    let mut examples: Vec<Example> = clips.iter().map(|c| to_example(c, featurizer)).collect::<Result<_, _>>()?;
    if config.augment_scope == AugmentScope::Global {
        let seed = rng::derive_seed(config.seed, "augment", &[]);
        examples.extend(synthesize(&clips, config, seed, featurizer)?);
    }
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let plan = match plan {
        None => stratified_kfold(&labels, k, config.seed)?,
        Some(p) => {
            if config.augment_scope == AugmentScope::Global {
                return Err(TrainError::Config {
                    key: "augment_scope".into(),
                    reason: "predefined folds require fold_local augmentation".into(),
                });
            }
            if p.k != k || p.fold_of.len() != corpus.len() || p.fold_of.iter().any(|&f| f >= k) {
                return Err(TrainError::Config {
                    key: "folds".into(),
                    reason: format!("predefined plan does not fit {} clips in {k} folds", corpus.len()),
                });
            }
            p
        }
    };

    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let val_idx = plan.validation(fold);
        let train_idx = plan.training(fold);
        let synthetic = match config.augment_scope {
            AugmentScope::FoldLocal => {
                let train_clips: Vec<&LabeledClip> = train_idx.iter().map(|&i| clips[i]).collect();
                let seed = rng::derive_seed(config.seed, "augment", &[fold as u64]);
                synthesize(&train_clips, config, seed, featurizer)?
            }
            AugmentScope::Global => Vec::new(),
        };
        let training: Vec<&Example> = train_idx.iter().map(|&i| &examples[i]).chain(synthetic.iter()).collect();
        let validation: Vec<&Example> = val_idx.iter().map(|&i| &examples[i]).collect();

        let model = train_fold(&training, &validation, config, input, fold, on_epoch)?;
        let scores = predict(&model.params, &validation)?;
        let val_labels: Vec<u8> = validation.iter().map(|e| e.label).collect();
        let report = evaluate(fold, &scores, &val_labels)?;
        folds.push(FoldResult {
            fold,
            model,
            report,
            training_ids: training.iter().map(|e| e.id.clone()).collect(),
            validation_ids: validation.iter().map(|e| e.id.clone()).collect(),
            validation_scores: scores,
            validation_labels: val_labels,
        });
    }

    let report = CvReport::new(folds.iter().map(|f| f.report.clone()).collect())?;
    let (final_model, final_source) = match config.final_model {
        FinalModel::BestFold => {
            let best = folds.iter().fold(&folds[0], |best, f| if f.report.auc > best.report.auc { f } else { best });
            (best.model.params.clone(), format!("fold {}", best.fold))
        }
        FinalModel::RetrainAll => {
            let synthetic = match config.augment_scope {
                AugmentScope::FoldLocal => {
                    let seed = rng::derive_seed(config.seed, "augment", &[k as u64]);
                    synthesize(&clips, config, seed, featurizer)?
                }
                AugmentScope::Global => Vec::new(),
            };
            let all: Vec<&Example> = examples.iter().chain(synthetic.iter()).collect();
            let model = train_fold(&all, &[], config, input, k, on_epoch)?;
            (model.params, "retrain-all".to_string())
        }
    };
    Ok(CvOutcome { plan, folds, report, final_model, final_source })
}
