use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig, Stagnation};
use crate::autodiff::{Tape, Var};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::model::{forward_batch, Model, ModelParams, ParamKind};
use crate::tensor::Tensor;

/// Probabilities are floored here before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValLoss,
    TrainLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// L2 coefficient on weight matrices.
    pub l2: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// An epoch improves on the best only by more than this.
    pub min_delta: f64,
    pub monitor: Monitor,
    pub restore_best: bool,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 500,
            learning_rate: 1e-3,
            l2: 1e-3,
            plateau_patience: 5,
            plateau_factor: 0.1,
            early_stop_patience: 10,
            min_delta: 1e-9,
            monitor: Monitor::ValLoss,
            restore_best: true,
            adam: AdamConfig::default(),
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train.{msg}")));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be >= 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) || !(self.min_delta >= 0.0) {
            return bad("l2 and min_delta must be >= 0");
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// `mean(−ln max(p[label], floor)) + λ·Σ‖W‖²` over weight matrices.
pub fn cross_entropy_loss(probs: &[Vec<f64>], labels: &[usize], params: &ModelParams<Tensor>, l2: f64) -> Result<f64> {
    Ok(data_loss(probs, labels)? + l2 * weight_penalty(params))
}

fn data_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::shape("cross_entropy_loss", &[probs.len()], &[labels.len()]));
    }
    let mut total = 0.0;
    for (p, &l) in probs.iter().zip(labels) {
        let q = p
            .get(l)
            .ok_or_else(|| Error::InvalidArgument(format!("label {l} out of range for {} classes", p.len())))?;
        total -= q.max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// `Σ‖W‖²` over weight matrices (biases excluded).
pub fn weight_penalty(params: &ModelParams<Tensor>) -> f64 {
    params
        .entries()
        .iter()
        .filter(|(_, kind, _)| *kind == ParamKind::Weight)
        .map(|(_, _, t)| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoEpochs,
    MaxEpochs,
    EarlyStop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub wall_time_secs: f64,
    pub config: TrainConfig,
}

impl RunRecord {
    pub fn learning_rates(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.learning_rate).collect()
    }

    /// Loss and accuracy trajectories without timing, for comparing runs.
    pub fn trajectory(&self) -> Vec<(f64, f64, Option<f64>, Option<f64>)> {
        self.epochs
            .iter()
            .map(|e| (e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy))
            .collect()
    }
}

fn vars_and_kinds(params: &ModelParams<Var>) -> Vec<(Var, ParamKind)> {
    params.entries().into_iter().map(|(_, k, v)| (*v, k)).collect()
}

/// Loss and accuracy of `model` on `samples` without training.
pub fn evaluate_loss(model: &Model, samples: &[Sample], l2: f64) -> Result<(f64, f64)> {
    let probs = model.predict(samples)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let loss = cross_entropy_loss(&probs, &labels, &model.params, l2)?;
    let correct = probs.iter().zip(&labels).filter(|(p, &l)| argmax(p) == l).count();
    Ok((loss, correct as f64 / labels.len() as f64))
}

/// Mini-batch Adam on `train`, monitoring `val` (or the training loss).
/// On return `model` holds the best parameters seen when `restore_best`
/// is set, otherwise the last ones.
pub fn fit(model: &mut Model, train: &[Sample], val: Option<&[Sample]>, config: &TrainConfig) -> Result<RunRecord> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.monitor == Monitor::ValLoss && val.is_none_or(<[Sample]>::is_empty) {
        return Err(Error::Config("monitor is val_loss but no validation samples were given".into()));
    }
    let k = model.config.num_classes;
    if let Some(s) = train.iter().chain(val.unwrap_or(&[])).find(|s| s.label >= k) {
        return Err(Error::InvalidArgument(format!("sample {} has label {} but the model has {k} classes", s.id, s.label)));
    }

    let started = Instant::now();
    let mut adam = Adam::new(config.adam, &model.params.entries().iter().map(|(_, _, t)| *t).collect::<Vec<_>>());
    let mut schedule = Stagnation::new(config.plateau_patience, config.early_stop_patience, config.min_delta);
    let mut lr = config.learning_rate;
    let mut best: Option<(usize, ModelParams<Tensor>)> = None;
    let mut epochs = Vec::new();
    let mut stop_reason = if config.max_epochs == 0 { StopReason::NoEpochs } else { StopReason::MaxEpochs };

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64)));

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            let grads = {
                let mut tape = Tape::new();
                let params = model.on_tape(&mut tape, true);
                let (probs, _) = forward_batch(&mut tape, &params, &model.arch, model.config.heads, &samples)?;
                let p = tape.value(probs);
                correct += (0..labels.len()).filter(|&i| argmax(p.row(i)) == labels[i]).count();
                let mut loss = tape.nll(probs, &labels, PROB_FLOOR)?;
                if config.l2 > 0.0 {
                    for (v, kind) in vars_and_kinds(&params) {
                        if kind == ParamKind::Weight {
                            let sq = tape.sum_squares(v);
                            let scaled = tape.scale(sq, config.l2);
                            loss = tape.add(loss, scaled)?;
                        }
                    }
                }
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::Diverged { epoch: epoch + 1, loss: value });
                }
                loss_sum += value * labels.len() as f64;
                let grads = tape.backward(loss)?;
                vars_and_kinds(&params)
                    .into_iter()
                    .map(|(v, _)| grads.wrt(v).cloned())
                    .collect::<Result<Vec<Tensor>>>()?
            };
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            adam.step(&mut model.params.tensors_mut(), &grad_refs, lr)?;
        }

        let train_loss = loss_sum / train.len() as f64;
        let train_accuracy = correct as f64 / train.len() as f64;
        let (val_loss, val_accuracy) = match val {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate_loss(model, v, config.l2)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        let monitored = match config.monitor {
            Monitor::ValLoss => val_loss.expect("validated above"),
            Monitor::TrainLoss => train_loss,
        };
        if !monitored.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, loss: monitored });
        }
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        let obs = schedule.observe(monitored);
        if obs.improved {
            best = Some((epoch + 1, model.params.clone()));
        }
        if obs.stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        if obs.decay {
            lr *= config.plateau_factor;
        }
    }

    let best_epoch = best.as_ref().map(|(e, _)| *e);
    if config.restore_best {
        if let Some((_, params)) = best {
            model.params = params;
        }
    }
    Ok(RunRecord {
        epochs,
        stop_reason,
        best_epoch,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config: config.clone(),
    })
}
