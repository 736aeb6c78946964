use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{generate, Dataset, Modality, SynthSpec};
use crate::error::Error;
use crate::model::{Architecture, Model, ModelConfig};
use crate::preprocess::PreprocessConfig;

fn small_model_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        d_k: 8,
        d_v: 4,
        conv_filters: 4,
        hidden: 8,
        num_classes: 4,
        seed: 3,
    }
}

fn small_dataset(per_class: usize, separation: f64, seed: u64) -> Dataset {
    generate(&SynthSpec {
        eye_dim: 4,
        ppg_dim: 3,
        semantic_dim: 6,
        eye_steps: 3,
        ppg_steps: 3,
        semantic_steps: 2,
        ..SynthSpec::balanced(per_class, separation, seed)
    })
    .unwrap()
}

fn small_experiment() -> Experiment {
    Experiment {
        model: small_model_config(),
        train: TrainConfig {
            max_epochs: 15,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        },
        preprocess: PreprocessConfig {
            pca_dim: Some(4),
            ..PreprocessConfig::default()
        },
        folds: 3,
        ..Experiment::default()
    }
}

// ---- loss ----

#[test]
fn loss_of_perfect_and_uniform_predictions() {
    let model = Model::new(small_model_config(), Architecture::default(), small_dataset(2, 1.0, 1).dims).unwrap();
    let perfect = vec![vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]];
    assert!(cross_entropy_loss(&perfect, &[1, 0], &model.params, 0.0).unwrap() <= 1e-11);
    for k in [2usize, 3, 4, 10] {
        let uniform = vec![vec![1.0 / k as f64; k]; 7];
        let labels: Vec<usize> = (0..7).map(|i| i % k).collect();
        let loss = cross_entropy_loss(&uniform, &labels, &model.params, 0.0).unwrap();
        assert!((loss - (k as f64).ln()).abs() <= 1e-9, "K={k}");
    }
    assert!(cross_entropy_loss(&perfect, &[4, 0], &model.params, 0.0).is_err());
}

#[test]
fn loss_matches_direct_formula() {
    let model = Model::new(small_model_config(), Architecture::default(), small_dataset(2, 1.0, 1).dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probs: Vec<Vec<f64>> = (0..9)
        .map(|_| {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let labels: Vec<usize> = (0..9).map(|i| (i * 7) % 4).collect();
    let mut expected = 0.0;
    for (p, &l) in probs.iter().zip(&labels) {
        expected -= p[l].ln();
    }
    expected /= 9.0;
    // weights are every matrix-shaped tensor in this network
    let penalty: f64 = model
        .params
        .entries()
        .iter()
        .filter(|(_, _, t)| t.rank() == 2)
        .map(|(_, _, t)| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    expected += 0.001 * penalty;
    let got = cross_entropy_loss(&probs, &labels, &model.params, 0.001).unwrap();
    assert!((got - expected).abs() <= 1e-12);
}

// ---- fit ----

fn fit_small(max_epochs: usize, seed: u64) -> (Model, RunRecord, Dataset) {
    let data = small_dataset(30, 3.0, seed);
    let mut model = Model::new(small_model_config(), Architecture::default(), data.dims).unwrap();
    let cfg = TrainConfig {
        max_epochs,
        batch_size: 16,
        learning_rate: 1e-2,
        monitor: Monitor::TrainLoss,
        ..TrainConfig::default()
    };
    let record = fit(&mut model, &data.samples, None, &cfg).unwrap();
    (model, record, data)
}

#[test]
fn separable_data_is_learned() {
    let (model, record, data) = fit_small(200, 5);
    let (_, accuracy) = evaluate_loss(&model, &data.samples, 0.0).unwrap();
    assert!(accuracy >= 0.95, "train accuracy {accuracy} after {} epochs", record.epochs.len());
    let lrs = record.learning_rates();
    assert!(lrs.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] * 0.1));
}

#[test]
fn same_seed_same_trajectory() {
    let (a, ra, _) = fit_small(4, 9);
    let (b, rb, _) = fit_small(4, 9);
    assert_eq!(ra.trajectory(), rb.trajectory());
    assert_eq!(a.params, b.params);
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let data = small_dataset(5, 3.0, 1);
    let mut model = Model::new(small_model_config(), Architecture::default(), data.dims).unwrap();
    let before = model.params.clone();
    let cfg = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let record = fit(&mut model, &data.samples, Some(&data.samples), &cfg).unwrap();
    assert!(record.epochs.is_empty());
    assert_eq!(record.stop_reason, StopReason::NoEpochs);
    assert_eq!(model.params, before);
}

#[test]
fn divergence_is_reported() {
    let data = small_dataset(5, 3.0, 1);
    let mut model = Model::new(small_model_config(), Architecture::default(), data.dims).unwrap();
    let cfg = TrainConfig {
        max_epochs: 5,
        learning_rate: 1e300,
        monitor: Monitor::TrainLoss,
        ..TrainConfig::default()
    };
    match fit(&mut model, &data.samples, None, &cfg) {
        Err(Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    let bad = [
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { plateau_factor: 1.0, ..Default::default() },
        TrainConfig { early_stop_patience: 0, ..Default::default() },
        TrainConfig { learning_rate: -1.0, ..Default::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    assert!(TrainConfig::default().validate().is_ok());
}

// ---- cross-validation ----

#[derive(Default)]
struct Recorder(Vec<(usize, FitStage, Vec<String>)>);

impl FitObserver for Recorder {
    fn observe(&mut self, fold: usize, stage: FitStage, ids: &[&str]) {
        self.0.push((fold, stage, ids.iter().map(|s| s.to_string()).collect()));
    }
}

#[test]
fn cross_validation_protocol() {
    let data = small_dataset(15, 3.0, 2);
    let exp = small_experiment();
    let mut rec = Recorder::default();
    let out = run_cv(&data, &exp, &mut rec).unwrap();
    assert_eq!(out.folds.len(), 3);

    let test: BTreeSet<&String> = out.split.test.iter().collect();
    let train: BTreeSet<&String> = out.split.train.iter().collect();
    assert!(test.is_disjoint(&train));
    assert_eq!(test.len() + train.len(), data.len());

    let mut validation: Vec<&String> = out.split.folds.iter().flat_map(|f| &f.validation).collect();
    validation.sort();
    assert_eq!(validation, out.split.train.iter().collect::<Vec<_>>());

    for (fold, stage, ids) in &rec.0 {
        if *stage != FitStage::Evaluate {
            assert!(ids.iter().all(|id| !test.contains(id)), "test id leaked into {stage:?} of fold {fold}");
        }
        if matches!(stage, FitStage::Preprocess | FitStage::Oversample) {
            let val: BTreeSet<&String> = out.split.folds[*fold].validation.iter().collect();
            assert!(ids.iter().all(|id| !val.contains(id)));
        }
    }

    let accs: Vec<f64> = out.folds.iter().map(|f| f.test.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / 3.0;
    let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((out.aggregate.test_accuracy.mean - mean).abs() < 1e-15);
    assert!((out.aggregate.test_accuracy.std - std).abs() < 1e-15);
    assert!(out.folds.iter().all(|f| f.test.num_samples == out.split.test.len()));

    let json = serde_json::to_string(&out.aggregate).unwrap();
    let back: Aggregate = serde_json::from_str(&json).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), json);
    let json = serde_json::to_string(&out.folds[0].record).unwrap();
    let back: RunRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.folds[0].record);
}

#[test]
fn unimodal_and_no_attention_runs() {
    let data = small_dataset(12, 3.0, 3);
    for arch in ["em", "em,ppg,vsi"] {
        let exp = Experiment {
            architecture: arch.parse().unwrap(),
            train: TrainConfig { max_epochs: 3, ..small_experiment().train },
            ..small_experiment()
        };
        let out = run_cv(&data, &exp, &mut ()).unwrap();
        assert_eq!(out.folds[0].model.arch.modalities.contains(&Modality::Ppg), arch.contains("ppg"));
    }
}
