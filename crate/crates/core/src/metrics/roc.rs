use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest ROC for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: usize,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    /// Absent when the class has no positives or no negatives.
    pub auc: Option<f64>,
    pub note: Option<String>,
}

/// Sweeps a threshold over the distinct values of score column `c` for every
/// class. Tied scores move the curve diagonally, which credits ties with
/// one half in the trapezoid area.
pub fn roc_ovr(scores: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<Vec<RocCurve>> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_ovr", &[scores.len()], &[labels.len()]));
    }
    if let Some(row) = scores.iter().find(|r| r.len() != num_classes) {
        return Err(Error::shape("roc_ovr", &[row.len()], &[num_classes]));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    Ok((0..num_classes).map(|c| curve(scores, labels, c)).collect())
}

fn curve(scores: &[Vec<f64>], labels: &[usize], class: usize) -> RocCurve {
    let pos = labels.iter().filter(|&&l| l == class).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        let which = if pos == 0 { "no positive samples" } else { "no negative samples" };
        return RocCurve {
            class,
            points: Vec::new(),
            auc: None,
            note: Some(which.to_string()),
        };
    }
    let mut ranked: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(s, &l)| (s[class], l == class)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < ranked.len() {
        let threshold = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == threshold {
            if ranked[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let next = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let prev = *points.last().expect("non-empty");
        auc += (next.0 - prev.0) * (next.1 + prev.1) / 2.0;
        points.push(next);
    }
    RocCurve {
        class,
        points,
        auc: Some(auc),
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    wins += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    fn two_class(scores: &[f64]) -> Vec<Vec<f64>> {
        scores.iter().map(|&s| vec![1.0 - s, s]).collect()
    }

    #[test]
    fn separating_and_constant_scores() {
        let labels = [0, 0, 1, 1];
        let r = roc_ovr(&two_class(&[0.1, 0.2, 0.8, 0.9]), &labels, 2).unwrap();
        assert_eq!(r[1].auc, Some(1.0));
        assert_eq!(r[1].points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r[1].points.last(), Some(&(1.0, 1.0)));
        let r = roc_ovr(&two_class(&[0.5; 4]), &labels, 2).unwrap();
        assert_eq!(r[1].auc, Some(0.5));
    }

    #[test]
    fn matches_pairwise_oracle_with_ties() {
        let scores = [0.3, 0.7, 0.7, 0.1, 0.9, 0.3, 0.5, 0.7, 0.2, 0.3];
        let labels = [0, 1, 0, 0, 1, 1, 0, 1, 0, 1];
        let r = roc_ovr(&two_class(&scores), &labels, 2).unwrap();
        let positive: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        assert!((r[1].auc.unwrap() - pairwise_auc(&scores, &positive)).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_class_has_no_auc() {
        let r = roc_ovr(&[vec![0.6, 0.3, 0.1], vec![0.2, 0.7, 0.1]], &[0, 1], 3).unwrap();
        assert!(r[2].auc.is_none() && r[2].note.is_some());
        assert!(r[0].auc.is_some());
    }

    #[test]
    fn monotone_transforms_and_monotone_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(4..40);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..20) as f64) / 20.0).collect();
            let labels: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { rng.random_range(0..2) }).collect();
            let base = roc_ovr(&two_class(&scores), &labels, 2).unwrap()[1].clone();
            for f in [|s: f64| s.exp(), |s: f64| 3.0 * s - 7.0] {
                let moved: Vec<Vec<f64>> = scores.iter().map(|&s| vec![0.0, f(s)]).collect();
                let auc = roc_ovr(&moved, &labels, 2).unwrap()[1].auc.unwrap();
                assert!((auc - base.auc.unwrap()).abs() <= 1e-12);
            }
            assert!(base.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        }
    }
}
