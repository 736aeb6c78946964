use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Stratified hold-out split plus cross-validation folds over the train side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub folds: Vec<Fold>,
    pub seed: u64,
}

fn by_class(items: &[(String, usize)], num_classes: usize) -> Vec<Vec<String>> {
    let mut groups = vec![Vec::new(); num_classes];
    for (id, label) in items {
        groups[*label].push(id.clone());
    }
    for g in &mut groups {
        g.sort();
    }
    groups
}

/// Stratified split: each class keeps `round(ratio · n_c)` samples on the
/// train side. `folds` is left empty.
pub fn split_train_test(
    items: &[(String, usize)],
    num_classes: usize,
    ratio: f64,
    seed: u64,
) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("train ratio {ratio} not in (0, 1)")));
    }
    if let Some((_, bad)) = items.iter().find(|(_, l)| *l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let groups = by_class(items, num_classes);
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("class {empty} has no samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut ids in groups {
        ids.shuffle(&mut rng);
        let n_train = (ratio * ids.len() as f64).round() as usize;
        test.extend(ids.split_off(n_train));
        train.extend(ids);
    }
    train.sort();
    test.sort();
    Ok(SplitPlan {
        train,
        test,
        folds: Vec::new(),
        seed,
    })
}

/// Stratified k-fold partition. Each class is shuffled and dealt round-robin,
/// continuing the deal position across classes so fold sizes stay balanced.
pub fn kfold(items: &[(String, usize)], num_classes: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    if let Some((_, bad)) = items.iter().find(|(_, l)| *l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let groups = by_class(items, num_classes);
    if let Some((class, ids)) = groups.iter().enumerate().find(|(_, g)| g.len() < k) {
        return Err(Error::InvalidArgument(format!(
            "class {class} has {} samples, fewer than k = {k}",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut blocks = vec![Vec::new(); k];
    let mut position = 0;
    for mut ids in groups {
        ids.shuffle(&mut rng);
        for id in ids {
            blocks[position % k].push(id);
            position += 1;
        }
    }
    for b in &mut blocks {
        b.sort();
    }
    Ok((0..k)
        .map(|f| {
            let mut train: Vec<String> = blocks
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != f)
                .flat_map(|(_, b)| b.iter().cloned())
                .collect();
            train.sort();
            Fold {
                train,
                validation: blocks[f].clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use proptest::prelude::*;

    use super::*;

    fn items(counts: &[usize]) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push((format!("c{c}_{i:03}"), c));
            }
        }
        out
    }

    fn per_class(ids: &[String], labels: &BTreeMap<String, usize>, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for id in ids {
            counts[labels[id]] += 1;
        }
        counts
    }

    #[test]
    fn exact_divisible_split() {
        let it = items(&[25, 25, 25, 25]);
        let labels: BTreeMap<_, _> = it.iter().cloned().collect();
        let plan = split_train_test(&it, 4, 0.8, 7).unwrap();
        assert_eq!(plan.train.len(), 80);
        assert_eq!(plan.test.len(), 20);
        assert_eq!(per_class(&plan.train, &labels, 4), vec![20; 4]);
        assert_eq!(per_class(&plan.test, &labels, 4), vec![5; 4]);
        assert_eq!(plan, split_train_test(&it, 4, 0.8, 7).unwrap());
        assert_ne!(plan.train, split_train_test(&it, 4, 0.8, 8).unwrap().train);
    }

    #[test]
    fn small_split_within_one_per_class() {
        let it = items(&[3, 3, 2, 2]);
        let labels: BTreeMap<_, _> = it.iter().cloned().collect();
        let plan = split_train_test(&it, 4, 0.8, 1).unwrap();
        let counts = per_class(&plan.train, &labels, 4);
        for (c, n) in [3usize, 3, 2, 2].iter().enumerate() {
            let ideal = 0.8 * *n as f64;
            assert!((counts[c] as f64 - ideal).abs() <= 1.0, "class {c}: {} vs {ideal}", counts[c]);
        }
    }

    #[test]
    fn split_errors() {
        assert!(split_train_test(&items(&[4, 0, 4]), 3, 0.8, 0).is_err());
        assert!(split_train_test(&items(&[4, 4]), 2, 1.0, 0).is_err());
        assert!(split_train_test(&items(&[4, 4]), 2, 0.0, 0).is_err());
    }

    #[test]
    fn fifty_ids_five_folds() {
        let it = items(&[10, 10, 10, 10, 10]);
        let folds = kfold(&it, 5, 5, 3).unwrap();
        let mut union = BTreeSet::new();
        for f in &folds {
            assert_eq!(f.validation.len(), 10);
            for id in &f.validation {
                assert!(union.insert(id.clone()), "{id} in two validation blocks");
            }
            let v: BTreeSet<_> = f.validation.iter().collect();
            assert!(f.train.iter().all(|id| !v.contains(id)));
            assert_eq!(f.train.len() + f.validation.len(), 50);
        }
        assert_eq!(union.len(), 50);
    }

    #[test]
    fn kfold_errors() {
        assert!(kfold(&items(&[4, 6]), 2, 5, 0).is_err());
        assert!(kfold(&items(&[6, 6]), 2, 1, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn split_and_folds_partition_and_stratify(
            counts in prop::collection::vec(5usize..30, 2..6),
            seed in any::<u64>(),
            k in 2usize..6,
        ) {
            let num_classes = counts.len();
            let it = items(&counts);
            let labels: BTreeMap<_, _> = it.iter().cloned().collect();
            let plan = split_train_test(&it, num_classes, 0.8, seed).unwrap();
            let all: BTreeSet<_> = plan.train.iter().chain(&plan.test).collect();
            prop_assert_eq!(all.len(), it.len());
            prop_assert_eq!(plan.train.len() + plan.test.len(), it.len());
            let train_counts = per_class(&plan.train, &labels, num_classes);
            for c in 0..num_classes {
                prop_assert!((train_counts[c] as f64 - 0.8 * counts[c] as f64).abs() <= 1.0);
            }

            let train_items: Vec<_> = plan.train.iter().map(|id| (id.clone(), labels[id])).collect();
            if train_counts.iter().all(|&n| n >= k) {
                let folds = kfold(&train_items, num_classes, k, seed).unwrap();
                let mut seen = BTreeSet::new();
                for f in &folds {
                    for id in &f.validation {
                        prop_assert!(seen.insert(id.clone()));
                    }
                    let val: BTreeSet<_> = f.validation.iter().collect();
                    prop_assert!(f.train.iter().all(|id| !val.contains(id)));
                    let vc = per_class(&f.validation, &labels, num_classes);
                    for c in 0..num_classes {
                        let ideal = train_counts[c] as f64 / k as f64;
                        prop_assert!((vc[c] as f64 - ideal).abs() <= 1.0);
                    }
                }
                prop_assert_eq!(seen.len(), plan.train.len());
            }
        }
    }
}
