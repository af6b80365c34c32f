use coughnet::evaluation::{auc, confusion_at_sensitivity, roc_auc, roc_curve};
use proptest::prelude::*;

/// Fraction of positive-negative pairs ranked correctly, ties counting half.
fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    good += 1.0;
                } else if si == sj {
                    good += 0.5;
                }
            }
        }
    }
    good / pairs
}

/// Scores on a coarse grid so ties are common, with both classes present.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=200).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..40).prop_map(|v| f64::from(v) / 40.0), n),
            prop::collection::vec(0u8..=1, n),
            0..n,
            0..n,
        )
            .prop_map(|(scores, mut labels, a, b)| {
                let b = if a == b { (b + 1) % labels.len() } else { b };
                labels[a] = 1;
                labels[b] = 0;
                (scores, labels)
            })
    })
}

fn distinct_instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    instance().prop_map(|(scores, labels)| {
        let scores = scores.iter().enumerate().map(|(i, s)| s + i as f64 * 1e-6).collect();
        (scores, labels)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trapezoid_equals_pair_statistic((scores, labels) in instance()) {
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_increasing_transform((scores, labels) in instance()) {
        let moved: Vec<f64> = scores.iter().map(|x| x * x * x + x).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((a - roc_auc(&moved, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn complement_symmetry((scores, labels) in distinct_instance()) {
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let total = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curve_shape((scores, labels) in instance()) {
        let c = roc_curve(&scores, &labels).unwrap();
        prop_assert_eq!(c.points().first().copied(), Some([0.0, 0.0]));
        prop_assert_eq!(c.points().last().copied(), Some([1.0, 1.0]));
        prop_assert!(c.fpr.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(c.tpr.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(c.thresholds.windows(2).all(|w| w[1] < w[0]));
        let a = auc(&c);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn sensitivity_target_is_met((scores, labels) in instance(), target in 0.05f64..=1.0) {
        let (t, m) = confusion_at_sensitivity(&scores, &labels, target).unwrap();
        let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
        prop_assert_eq!(m.tp + m.fn_, positives);
        prop_assert_eq!(m.tp + m.fn_ + m.tn + m.fp, labels.len() as f64);
        prop_assert!(m.tp >= target * positives - 1e-9);
        // no higher distinct threshold also meets the target
        if let Some(&higher) = scores.iter().filter(|&&s| s > t).min_by(|a, b| a.total_cmp(b)) {
            let tp = scores.iter().zip(&labels).filter(|(&s, &l)| l == 1 && s >= higher).count() as f64;
            prop_assert!(tp < target * positives - 1e-9);
        }
    }
}
