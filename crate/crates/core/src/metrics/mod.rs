//! Classification metrics: confusion matrix, macro-averaged rates and
//! one-vs-rest ROC curves.

mod roc;

use serde::{Deserialize, Serialize};

pub use roc::{roc_ovr, RocCurve};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::data::Sample;

/// `K×K` counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::shape("confusion", &[preds.len()], &[labels.len()]));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= num_classes || l >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class index {} out of range for {num_classes} classes",
                p.max(l)
            )));
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Set when a class has no true or no predicted samples; its undefined
    /// rates count as 0.
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MacroMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let k = cm.num_classes();
    let mut warnings = Vec::new();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let recall = ratio(tp, cm.row_sum(c)).unwrap_or_else(|| {
                warnings.push(format!("class {c} has no samples; recall counted as 0"));
                0.0
            });
            let precision = ratio(tp, cm.col_sum(c)).unwrap_or_else(|| {
                warnings.push(format!("class {c} is never predicted; precision counted as 0"));
                0.0
            });
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(MacroMetrics {
        accuracy: cm.trace() as f64 / total as f64,
        macro_recall: mean(|c| c.recall),
        macro_precision: mean(|c| c.precision),
        macro_f1: mean(|c| c.f1),
        warnings,
        per_class,
    })
}

/// Index of the largest probability; ties go to the lower class.
pub fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        MeanStd { mean, std }
    }
}

/// Size in megabytes at 4 bytes per parameter.
pub fn param_megabytes(count: usize) -> f64 {
    count as f64 * 4.0 / 1_000_000.0
}

/// Metrics for one model on one set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `validation`, `test`, `train` or a caller-chosen name.
    pub split: String,
    pub fold: Option<usize>,
    pub seed: u64,
    pub architecture: String,
    pub num_samples: usize,
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<RocCurve>,
    pub param_count: usize,
    pub param_mb: f64,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Builds a report from predicted probabilities.
    pub fn from_probabilities(
        probs: &[Vec<f64>],
        labels: &[usize],
        class_names: &[String],
        param_count: usize,
    ) -> Result<EvalReport> {
        let k = class_names.len();
        let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let cm = confusion(&preds, labels, k)?;
        let m = macro_metrics(&cm)?;
        let roc = roc_ovr(probs, labels, k)?;
        let mut warnings = m.warnings;
        for curve in &roc {
            if curve.auc.is_none() {
                warnings.push(format!("class {}: ROC undefined ({})", curve.class, curve.note.as_deref().unwrap_or("")));
            }
        }
        Ok(EvalReport {
            split: String::new(),
            fold: None,
            seed: 0,
            architecture: String::new(),
            num_samples: labels.len(),
            accuracy: m.accuracy,
            macro_recall: m.macro_recall,
            macro_precision: m.macro_precision,
            macro_f1: m.macro_f1,
            per_class: m.per_class,
            class_names: class_names.to_vec(),
            confusion: cm,
            roc,
            param_count,
            param_mb: param_megabytes(param_count),
            warnings,
        })
    }
}

/// Runs `model` over already-preprocessed samples.
pub fn evaluate(model: &Model, samples: &[Sample], class_names: &[String], split: &str) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!("no samples to evaluate in `{split}`")));
    }
    let probs = model.predict(samples)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let mut report = EvalReport::from_probabilities(&probs, &labels, class_names, model.param_count())?;
    report.split = split.to_string();
    report.seed = model.config.seed;
    report.architecture = model.arch.label();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn perfect_and_constant_predictions() {
        let labels = [0, 1, 2, 1, 0];
        let cm = confusion(&labels, &labels, 3).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        let m = macro_metrics(&cm).unwrap();
        assert_eq!((m.accuracy, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0));

        let cm = confusion(&[0; 5], &labels, 3).unwrap();
        assert!(cm.counts.iter().all(|r| r[1] == 0 && r[2] == 0));
        assert!(confusion(&[3], &[0], 3).is_err());
        assert!(confusion(&[0, 1], &[0], 3).is_err());
    }

    #[test]
    fn tally_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let preds: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let cm = confusion(&preds, &labels, 4).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                let n = (0..200).filter(|&i| labels[i] == t && preds[i] == p).count() as u64;
                assert_eq!(cm.counts[t][p], n);
            }
        }
        assert_eq!(cm.total(), 200);
    }

    #[test]
    fn hand_computed_two_class_case() {
        let cm = ConfusionMatrix { counts: vec![vec![5, 5], vec![0, 10]] };
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(m.per_class[0].recall, 0.5);
        assert_eq!(m.per_class[1].recall, 1.0);
        assert_eq!(m.macro_recall, 0.75);
        assert_eq!(m.per_class[0].precision, 1.0);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class[1].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn empty_class_is_flagged() {
        let cm = ConfusionMatrix { counts: vec![vec![3, 1, 0], vec![0, 4, 0], vec![0, 0, 0]] };
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(m.per_class[2].recall, 0.0);
        assert!(!m.warnings.is_empty());
        assert!(macro_metrics(&ConfusionMatrix { counts: vec![vec![0, 0], vec![0, 0]] }).is_err());
    }

    #[test]
    fn mean_std_is_population() {
        let s = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn accuracy_identity_and_f1_range(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..300)) {
            let (preds, labels): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion(&preds, &labels, 4).unwrap();
            let m = macro_metrics(&cm).unwrap();
            prop_assert_eq!((m.accuracy * cm.total() as f64).round() as u64, cm.trace());
            prop_assert!((0.0..=1.0).contains(&m.macro_f1));
            let diagonal = (0..4).all(|i| (0..4).all(|j| i == j || cm.counts[i][j] == 0));
            let all_present = (0..4).all(|i| cm.counts[i][i] > 0);
            prop_assert_eq!(m.macro_f1 == 1.0, diagonal && all_present);
            let mean_recall = m.per_class.iter().map(|c| c.recall).sum::<f64>() / 4.0;
            prop_assert!((mean_recall - m.macro_recall).abs() <= 1e-12);
        }
    }
}
