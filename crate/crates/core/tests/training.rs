use std::collections::HashSet;

use coughnet::augment::LabeledClip;
use coughnet::nn::{InputShape, ModelParams, Regularization, Tensor4};
use coughnet::training::{
    epoch_order, objective, run_cv, train_fold, AugmentScope, Example, Featurizer, FinalModel, TrainConfig, TrainError,
};
use coughnet::{rng, AudioClip};
use proptest::prelude::*;
use rand::Rng;

const SHAPE: InputShape = InputShape { frames: 8, coeffs: 6 };
const CLIP_LEN: usize = 4096;

/// Summarizes a clip as the RMS of 48 equal segments.
struct SegmentRms;

impl Featurizer for SegmentRms {
    fn input_shape(&self) -> InputShape {
        SHAPE
    }

    fn featurize(&mut self, clip: &LabeledClip) -> Result<Vec<f64>, TrainError> {
        let n = SHAPE.frames * SHAPE.coeffs;
        let seg = clip.clip.len() / n;
        Ok(clip
            .clip
            .samples
            .chunks(seg)
            .take(n)
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt() * 10.0)
            .collect())
    }
}

fn corpus(pos: usize, neg: usize) -> Vec<LabeledClip> {
    (0..pos + neg)
        .map(|i| {
            let label = u8::from(i < pos);
            let mut r = rng::stream(99, "corpus", &[i as u64]);
            let amp = if label == 1 { 0.6 } else { 0.3 };
            let samples = (0..CLIP_LEN).map(|_| amp * r.gen_range(-1.0..1.0)).collect();
            LabeledClip::original(format!("clip{i:03}"), AudioClip::new(samples, 22050), label)
        })
        .collect()
}

fn examples(n: usize) -> Vec<Example> {
    let mut r = rng::stream(5, "examples", &[]);
    (0..n)
        .map(|i| Example {
            id: format!("e{i}"),
            root_id: format!("e{i}"),
            label: (i % 2) as u8,
            features: (0..48).map(|_| r.gen_range(-1.0..1.0) + (i % 2) as f64).collect(),
        })
        .collect()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, seed: 3, learning_rate: 1e-3, ..TrainConfig::default() }
}

#[test]
fn step_counting_and_history() {
    let ex = examples(64);
    let refs: Vec<&Example> = ex.iter().collect();
    let m = train_fold(&refs, &refs[..8], &quick(2), SHAPE, 0, &mut |_| {}).unwrap();
    assert_eq!(m.steps, 4);
    assert_eq!(m.history.len(), 2);
    assert!(m.history.iter().all(|h| h.val_auc.is_some() && h.train_loss.is_finite()));

    let ex = examples(65);
    let refs: Vec<&Example> = ex.iter().collect();
    let m = train_fold(&refs, &[], &quick(2), SHAPE, 0, &mut |_| {}).unwrap();
    assert_eq!(m.steps, 6, "trailing partial batch is used");
    assert!(m.history.iter().all(|h| h.val_loss.is_none()));
}

#[test]
fn training_is_deterministic() {
    let ex = examples(40);
    let refs: Vec<&Example> = ex.iter().collect();
    let a = train_fold(&refs, &refs[..10], &quick(3), SHAPE, 1, &mut |_| {}).unwrap();
    let b = train_fold(&refs, &refs[..10], &quick(3), SHAPE, 1, &mut |_| {}).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    let c = train_fold(&refs, &refs[..10], &quick(3), SHAPE, 2, &mut |_| {}).unwrap();
    assert_ne!(a.params, c.params);
}

proptest! {
    #[test]
    fn epoch_orders_are_permutations(n in 1usize..300, seed: u64, key in 0u64..10, epoch in 0usize..500) {
        let mut order = epoch_order(n, seed, key, epoch);
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn zero_regularization_leaves_only_the_data_term() {
    let cfg = TrainConfig { reg_kernel: 0.0, reg_bias: 0.0, reg_activity: 0.0, ..TrainConfig::default() };
    assert_eq!(cfg.regularization(), Regularization::NONE);
    let params = ModelParams::init(cfg.model_config(SHAPE), 1, 0).unwrap();
    let ex = examples(4);
    let rows: Vec<&[f64]> = ex.iter().map(|e| e.features.as_slice()).collect();
    let x = Tensor4::from_examples(8, 6, &rows).unwrap();
    let labels: Vec<u8> = ex.iter().map(|e| e.label).collect();
    let cache = params.forward_train(&x, None).unwrap();
    assert_eq!(params.penalty(&cache), 0.0);
    let data = coughnet::training::bce_loss(&cache.probabilities, &labels).unwrap().0;
    assert_eq!(objective(&params, &x, &labels).unwrap(), data);
}

#[test]
fn fold_local_cv_keeps_synthetics_out_of_validation() {
    let clips = corpus(10, 40);
    let cfg = TrainConfig { epochs: 2, folds: 5, seed: 11, learning_rate: 1e-3, ..TrainConfig::default() };
    let out = run_cv(&clips, &cfg, None, &mut SegmentRms, &mut |_| {}).unwrap();
    assert_eq!(out.folds.len(), 5);
    assert_eq!(out.report.folds.len(), 5);

    let originals: HashSet<&str> = clips.iter().map(|c| c.id.as_str()).collect();
    let mut seen = Vec::new();
    for f in &out.folds {
        let val: HashSet<&str> = f.validation_ids.iter().map(String::as_str).collect();
        assert!(val.iter().all(|id| originals.contains(id)), "synthetic example in validation");
        seen.extend(f.validation_ids.iter().cloned());
        // every synthetic training example stems from a training original
        let synthetic: Vec<&String> = f.training_ids.iter().filter(|id| id.contains("~aug")).collect();
        assert!(!synthetic.is_empty());
        for id in synthetic {
            let root = id.split("~aug").next().unwrap();
            assert!(f.training_ids.iter().any(|t| t == root) && !val.contains(root));
        }
        // 8 training positives and 32 negatives: upsampled to ceil(32 / 3) = 11
        let pos = f.training_ids.iter().filter(|id| id.contains("~aug") || id.as_str() < "clip010").count();
        assert_eq!(pos, 11);
    }
    seen.sort();
    let mut all: Vec<String> = originals.iter().map(|s| s.to_string()).collect();
    all.sort();
    assert_eq!(seen, all, "validation sets partition the originals");
    assert!(out.final_source.starts_with("fold "));
}

#[test]
fn global_scope_and_retrain_all() {
    let clips = corpus(10, 40);
    let cfg = TrainConfig {
        epochs: 1,
        folds: 3,
        seed: 2,
        augment_scope: AugmentScope::Global,
        final_model: FinalModel::RetrainAll,
        ..TrainConfig::default()
    };
    let out = run_cv(&clips, &cfg, None, &mut SegmentRms, &mut |_| {}).unwrap();
    assert_eq!(out.plan.fold_of.len(), 50 + 4, "plan covers the upsampled corpus");
    assert_eq!(out.final_source, "retrain-all");
    let total: usize = out.folds.iter().map(|f| f.validation_ids.len()).sum();
    assert_eq!(total, 54);
}

#[test]
fn cv_input_errors() {
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    assert!(matches!(
        run_cv(
            &corpus(3, 20),
            &TrainConfig { augment_enabled: false, ..cfg.clone() },
            None,
            &mut SegmentRms,
            &mut |_| {}
        ),
        Err(TrainError::ClassTooSmall { class: 1, count: 3, k: 5 })
    ));
    let bad = TrainConfig { batch_size: 0, ..cfg };
    assert!(matches!(
        run_cv(&corpus(10, 20), &bad, None, &mut SegmentRms, &mut |_| {}),
        Err(TrainError::Config { key, .. }) if key == "batch_size"
    ));
}
