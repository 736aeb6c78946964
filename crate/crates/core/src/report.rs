//! Report files: canonical JSON, CSV summaries, ROC points, feature dumps
//! and the ablation table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset_with, Dataset, Modality, Sample};
use crate::error::{Error, Result};
use crate::metrics::{param_megabytes, EvalReport, MeanStd, RocCurve};
use crate::model::Architecture;
use crate::training::{run_cv, Aggregate, CvOutcome, Experiment, FitObserver};

pub const REPORT_SCHEMA: &str = "emofuse.report.v1";

/// Pretty JSON with object keys sorted at every level, so equal values
/// always give equal bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is ordered by key
    let tree = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&tree)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &canonical_json(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let wrap = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `class,fpr,tpr` rows for every curve with a defined AUC.
pub fn write_roc_csv(path: &Path, curves: &[RocCurve]) -> Result<()> {
    let header = ["class", "fpr", "tpr"].map(String::from);
    let rows: Vec<Vec<String>> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(move |(f, t)| vec![c.class.to_string(), f.to_string(), t.to_string()]))
        .collect();
    write_csv(path, &header, &rows)
}

/// One row per sample: id, label, then the classifier input vector.
pub fn write_feature_csv(path: &Path, samples: &[Sample], features: &[Vec<f64>]) -> Result<()> {
    if samples.len() != features.len() {
        return Err(Error::shape("write_feature_csv", &[samples.len()], &[features.len()]));
    }
    let width = features.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..width).map(|j| format!("f{j}")));
    let rows: Vec<Vec<String>> = samples
        .iter()
        .zip(features)
        .map(|(s, f)| {
            let mut row = vec![s.id.clone(), s.label.to_string()];
            row.extend(f.iter().map(f64::to_string));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Timing-free summary of a cross-validated run. Two runs of the same
/// configuration serialize to the same bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema: String,
    pub config_id: String,
    pub architecture: String,
    pub seed: u64,
    pub aggregate: Aggregate,
    pub param_mb: f64,
    pub folds: Vec<FoldSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub test_macro_recall: f64,
    pub test_macro_f1: f64,
    pub test_auc: Vec<Option<f64>>,
}

impl TrainSummary {
    pub fn of(outcome: &CvOutcome, exp: &Experiment, config_id: &str) -> TrainSummary {
        let folds = outcome
            .folds
            .iter()
            .map(|f| FoldSummary {
                fold: f.fold,
                epochs: f.record.epochs.len(),
                best_epoch: f.record.best_epoch,
                validation_accuracy: f.validation.accuracy,
                test_accuracy: f.test.accuracy,
                test_macro_recall: f.test.macro_recall,
                test_macro_f1: f.test.macro_f1,
                test_auc: f.test.roc.iter().map(|c| c.auc).collect(),
            })
            .collect();
        TrainSummary {
            schema: REPORT_SCHEMA.into(),
            config_id: config_id.into(),
            architecture: exp.architecture.label(),
            seed: exp.seed,
            aggregate: outcome.aggregate.clone(),
            param_mb: param_megabytes(outcome.aggregate.param_count),
            folds,
        }
    }
}

/// One requested row of an ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationEntry {
    pub id: String,
    pub modalities: Vec<Modality>,
    pub ca: bool,
    /// Replacement semantic files (video id → path relative to the
    /// manifest) for comparing embedding sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_table: Option<BTreeMap<String, PathBuf>>,
}

impl AblationEntry {
    pub fn new(id: &str, modalities: &[Modality], ca: bool) -> Self {
        AblationEntry {
            id: id.into(),
            modalities: modalities.to_vec(),
            ca,
            semantic_table: None,
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(&self.modalities, self.ca)
    }
}

/// The seven modality/fusion rows compared in the ablation, I to VII.
pub fn standard_ablation() -> Vec<AblationEntry> {
    use Modality::{Eye, Ppg, Semantic};
    vec![
        AblationEntry::new("I", &[Eye], false),
        AblationEntry::new("II", &[Ppg], false),
        AblationEntry::new("III", &[Eye, Ppg], true),
        AblationEntry::new("IV", &[Ppg, Semantic], true),
        AblationEntry::new("V", &[Eye, Semantic], true),
        AblationEntry::new("VI", &[Eye, Ppg, Semantic], false),
        AblationEntry::new("VII", &[Eye, Ppg, Semantic], true),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config_id: String,
    pub modalities: String,
    pub ca: bool,
    pub accuracy: MeanStd,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub param_count: usize,
    pub param_mb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub schema: String,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub const CSV_HEADER: [&'static str; 8] = ["config_id", "modalities", "ca", "acc_mean", "acc_std", "recall", "f1", "params"];

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.config_id.clone(),
                    r.modalities.clone(),
                    r.ca.to_string(),
                    r.accuracy.mean.to_string(),
                    r.accuracy.std.to_string(),
                    r.macro_recall.to_string(),
                    r.macro_f1.to_string(),
                    r.param_count.to_string(),
                ]
            })
            .collect();
        write_csv(path, &Self::CSV_HEADER.map(String::from), &rows)
    }

    /// Plain-text table for terminals.
    pub fn render(&self) -> String {
        let mut out = format!("{:<6} {:<14} {:<3} {:>15} {:>7} {:>7} {:>9}\n", "id", "modalities", "ca", "acc", "recall", "f1", "params");
        for r in &self.rows {
            out += &format!(
                "{:<6} {:<14} {:<3} {:>7.2}±{:<7.2} {:>7.2} {:>7.2} {:>9}\n",
                r.config_id,
                r.modalities,
                if r.ca { "+" } else { "-" },
                100.0 * r.accuracy.mean,
                100.0 * r.accuracy.std,
                100.0 * r.macro_recall,
                100.0 * r.macro_f1,
                r.param_count
            );
        }
        out
    }
}

/// Runs every entry through cross-validation in declared order. Entries
/// with a `semantic_table` reload the dataset from `manifest` with those
/// semantic files swapped in.
pub fn ablation_suite(
    dataset: &Dataset,
    manifest: Option<&Path>,
    exp: &Experiment,
    entries: &[AblationEntry],
    observer: &mut dyn FitObserver,
) -> Result<AblationTable> {
    if entries.is_empty() {
        return Err(Error::Config("ablation list is empty: nothing to run".into()));
    }
    for e in entries {
        e.architecture()?;
        if e.semantic_table.is_some() && manifest.is_none() {
            return Err(Error::Config(format!("ablation row {} swaps semantic files but no manifest was given", e.id)));
        }
    }
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let variant;
        let data = match (&e.semantic_table, manifest) {
            (Some(table), Some(path)) => {
                variant = load_dataset_with(path, Some(table))?;
                &variant
            }
            _ => dataset,
        };
        let row_exp = Experiment {
            architecture: e.architecture()?,
            ..exp.clone()
        };
        let outcome = run_cv(data, &row_exp, observer)?;
        let a = &outcome.aggregate;
        rows.push(AblationRow {
            config_id: e.id.clone(),
            modalities: e.modalities.iter().map(|m| m.tag()).collect::<Vec<_>>().join("+"),
            ca: row_exp.architecture.uses_attention(),
            accuracy: a.test_accuracy,
            macro_recall: a.test_macro_recall.mean,
            macro_f1: a.test_macro_f1.mean,
            param_count: a.param_count,
            param_mb: param_megabytes(a.param_count),
        });
    }
    Ok(AblationTable {
        schema: REPORT_SCHEMA.into(),
        seed: exp.seed,
        rows,
    })
}

/// Everything written for one fold's evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub schema: String,
    pub fold: usize,
    pub train: EvalReport,
    pub validation: EvalReport,
    pub test: EvalReport,
}
