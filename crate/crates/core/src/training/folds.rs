use rand::seq::SliceRandom;

use super::TrainError;
use crate::rng;

/// Assignment of every example to one of `k` validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// `fold_of[i]` is the validation fold of example `i`.
    pub fold_of: Vec<usize>,
}

impl FoldPlan {
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Stratified k-fold split: each class is shuffled with the `folds` stream
/// of `seed` and dealt round-robin.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan, TrainError> {
    if k < 2 {
        return Err(TrainError::Config { key: "folds".into(), reason: format!("must be at least 2, got {k}") });
    }
    let mut fold_of = vec![0; labels.len()];
    for class in [0u8, 1] {
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(TrainError::LabelOutOfDomain(bad));
        }
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(TrainError::ClassTooSmall { class, count: members.len(), k });
        }
        members.shuffle(&mut rng::stream(seed, "folds", &[u64::from(class)]));
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = j % k;
        }
    }
    Ok(FoldPlan { k, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pos: usize, neg: usize) -> Vec<u8> {
        let mut l = vec![1u8; pos];
        l.extend(vec![0u8; neg]);
        l
    }

    #[test]
    fn exact_division() {
        let l = labels(75, 965);
        let plan = stratified_kfold(&l, 5, 42).unwrap();
        for f in 0..5 {
            let v = plan.validation(f);
            let pos = v.iter().filter(|&&i| l[i] == 1).count();
            assert_eq!((pos, v.len() - pos), (15, 193));
        }
    }

    #[test]
    fn uneven_class_is_dealt_round_robin() {
        let l = labels(7, 20);
        let plan = stratified_kfold(&l, 5, 3).unwrap();
        let mut counts: Vec<usize> =
            (0..5).map(|f| plan.validation(f).iter().filter(|&&i| l[i] == 1).count()).collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![1, 1, 1, 2, 2]);
    }

    #[test]
    fn deterministic_and_partitioning() {
        let l = labels(11, 31);
        let a = stratified_kfold(&l, 4, 9).unwrap();
        assert_eq!(a, stratified_kfold(&l, 4, 9).unwrap());
        assert_ne!(a, stratified_kfold(&l, 4, 10).unwrap());
        let mut all: Vec<usize> = (0..4).flat_map(|f| a.validation(f)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..42).collect::<Vec<_>>());
        for f in 0..4 {
            assert_eq!(a.validation(f).len() + a.training(f).len(), 42);
        }
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            stratified_kfold(&labels(4, 20), 5, 0),
            Err(TrainError::ClassTooSmall { class: 1, count: 4, k: 5 })
        ));
    }
}
