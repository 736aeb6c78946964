use serde::{Deserialize, Serialize};

use super::fit::{fit, RunRecord, TrainConfig};
use crate::data::{kfold, split_train_test, Dataset, FeatureDims, Sample, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, MeanStd};
use crate::model::{Architecture, Model, ModelConfig};
use crate::preprocess::{oversample, FittedPreprocessor, PreprocessConfig, ResampleReport};

/// Everything that determines one cross-validated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub model: ModelConfig,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub train_ratio: f64,
    pub folds: usize,
    /// Seed of the train/test split and the fold assignment.
    pub seed: u64,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            model: ModelConfig::default(),
            architecture: Architecture::default(),
            train: TrainConfig::default(),
            preprocess: PreprocessConfig::default(),
            train_ratio: 0.8,
            folds: 5,
            seed: 7,
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.preprocess.validate()?;
        Architecture::new(&self.architecture.modalities, self.architecture.cross_attention)?;
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config("train_ratio must lie in (0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Sets every seed (split, initialization, shuffling, oversampling).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }
}

/// Which statistic a set of samples is about to influence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStage {
    Preprocess,
    Oversample,
    Train,
    /// Samples whose loss is monitored for scheduling and best-epoch choice.
    Monitor,
    Evaluate,
}

/// Sees the ids entering each stage of each fold.
pub trait FitObserver {
    fn observe(&mut self, fold: usize, stage: FitStage, ids: &[&str]);
}

impl FitObserver for () {
    fn observe(&mut self, _: usize, _: FitStage, _: &[&str]) {}
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    /// The fold's training samples before oversampling.
    pub train: EvalReport,
    pub validation: EvalReport,
    pub test: EvalReport,
    pub record: RunRecord,
    pub resample: Option<ResampleReport>,
    pub preprocessor: FittedPreprocessor,
    pub model: Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub folds: usize,
    pub test_accuracy: MeanStd,
    pub test_macro_recall: MeanStd,
    pub test_macro_f1: MeanStd,
    pub validation_accuracy: MeanStd,
    pub param_count: usize,
}

impl Aggregate {
    pub fn of(folds: &[FoldOutcome]) -> Aggregate {
        let stat = |f: fn(&FoldOutcome) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>());
        Aggregate {
            folds: folds.len(),
            test_accuracy: stat(|f| f.test.accuracy),
            test_macro_recall: stat(|f| f.test.macro_recall),
            test_macro_f1: stat(|f| f.test.macro_f1),
            validation_accuracy: stat(|f| f.validation.accuracy),
            param_count: folds.first().map_or(0, |f| f.test.param_count),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub split: SplitPlan,
    pub folds: Vec<FoldOutcome>,
    pub aggregate: Aggregate,
}

fn ids(samples: &[Sample]) -> Vec<&str> {
    samples.iter().map(|s| s.id.as_str()).collect()
}

/// Input widths the model sees after preprocessing.
pub fn model_dims(dataset: &Dataset, pre: &FittedPreprocessor) -> FeatureDims {
    let (eye, ppg, semantic) = pre.output_dims(dataset.dims.eye, dataset.dims.ppg, dataset.dims.semantic);
    FeatureDims { eye, ppg, semantic }
}

/// Fits preprocessing on `train` only, oversamples, trains and evaluates on
/// `val` and `test`.
pub fn run_fold(
    dataset: &Dataset,
    exp: &Experiment,
    fold: usize,
    train: &[Sample],
    val: &[Sample],
    test: &[Sample],
    observer: &mut dyn FitObserver,
) -> Result<FoldOutcome> {
    observer.observe(fold, FitStage::Preprocess, &ids(train));
    let pre = FittedPreprocessor::fit(train, &exp.preprocess)?;
    let train_t = pre.apply_all(train)?;
    let val_t = pre.apply_all(val)?;
    let test_t = pre.apply_all(test)?;

    let (train_fit, resample) = if exp.preprocess.adasyn {
        observer.observe(fold, FitStage::Oversample, &ids(train));
        let (out, report) = oversample(&train_t, dataset.num_classes(), &exp.preprocess, exp.train.seed)?;
        (out, Some(report))
    } else {
        (train_t.clone(), None)
    };
    let train_original = train_t;

    let mut model_cfg = exp.model.clone();
    model_cfg.num_classes = dataset.num_classes();
    let mut model = Model::new(model_cfg, exp.architecture.clone(), model_dims(dataset, &pre))?;
    observer.observe(fold, FitStage::Train, &ids(&train_fit));
    observer.observe(fold, FitStage::Monitor, &ids(&val_t));
    let record = fit(&mut model, &train_fit, Some(&val_t), &exp.train)?;

    let mut train_report = evaluate(&model, &train_original, &dataset.class_names, "train")?;
    train_report.fold = Some(fold);
    observer.observe(fold, FitStage::Evaluate, &ids(&val_t));
    let mut validation = evaluate(&model, &val_t, &dataset.class_names, "validation")?;
    validation.fold = Some(fold);
    observer.observe(fold, FitStage::Evaluate, &ids(&test_t));
    let mut test_report = evaluate(&model, &test_t, &dataset.class_names, "test")?;
    test_report.fold = Some(fold);
    Ok(FoldOutcome {
        fold,
        train: train_report,
        validation,
        test: test_report,
        record,
        resample,
        preprocessor: pre,
        model,
    })
}

/// Stratified train/test split, then k stratified folds of the training
/// part. Each fold is evaluated on its validation block and on the shared
/// test set.
pub fn run_cv(dataset: &Dataset, exp: &Experiment, observer: &mut dyn FitObserver) -> Result<CvOutcome> {
    exp.validate()?;
    let items = dataset.labeled_ids();
    let k = dataset.num_classes();
    let split = split_train_test(&items, k, exp.train_ratio, exp.seed)?;
    let train_ids: std::collections::BTreeSet<&String> = split.train.iter().collect();
    let train_items: Vec<(String, usize)> = items.iter().filter(|(id, _)| train_ids.contains(id)).cloned().collect();
    let folds = kfold(&train_items, k, exp.folds, exp.seed)?;
    let test = dataset.subset(&split.test);
    let mut outcomes = Vec::with_capacity(folds.len());
    for (i, f) in folds.iter().enumerate() {
        let train = dataset.subset(&f.train);
        let val = dataset.subset(&f.validation);
        outcomes.push(run_fold(dataset, exp, i, &train, &val, &test, observer)?);
    }
    let aggregate = Aggregate::of(&outcomes);
    let plan = SplitPlan {
        folds,
        ..split
    };
    Ok(CvOutcome {
        split: plan,
        folds: outcomes,
        aggregate,
    })
}
