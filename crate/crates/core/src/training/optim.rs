use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[&Tensor]) -> Self {
        Adam {
            config,
            m: shapes.iter().map(|t| vec![0.0; t.numel()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam_step", &[params.len(), grads.len()], &[self.m.len()]));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.numel() != m.len() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = p.data_mut();
            for (j, &gj) in g.data().iter().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// What one epoch's monitored value did to the schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub decay: bool,
    pub stop: bool,
}

/// Shared bookkeeping for learning-rate decay on plateau and early stopping.
/// An epoch improves when the monitored value drops by more than
/// `min_delta` below the best so far; the first epoch always improves.
/// A decay restarts only the decay counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Stagnation {
    pub plateau_patience: usize,
    pub stop_patience: usize,
    pub min_delta: f64,
    pub best: Option<f64>,
    pub since_improvement: usize,
    pub since_decay_or_improvement: usize,
}

impl Stagnation {
    pub fn new(plateau_patience: usize, stop_patience: usize, min_delta: f64) -> Self {
        Stagnation {
            plateau_patience,
            stop_patience,
            min_delta,
            best: None,
            since_improvement: 0,
            since_decay_or_improvement: 0,
        }
    }

    pub fn observe(&mut self, value: f64) -> Observation {
        let improved = match self.best {
            None => true,
            Some(best) => value < best - self.min_delta,
        };
        if improved {
            self.best = Some(value);
            self.since_improvement = 0;
            self.since_decay_or_improvement = 0;
            return Observation { improved, decay: false, stop: false };
        }
        self.since_improvement += 1;
        self.since_decay_or_improvement += 1;
        let decay = self.since_decay_or_improvement >= self.plateau_patience;
        if decay {
            self.since_decay_or_improvement = 0;
        }
        Observation {
            improved,
            decay,
            stop: self.since_improvement >= self.stop_patience,
        }
    }
}

/// Learning rate after replaying `history` through the plateau rule.
pub fn plateau_scheduler(history: &[f64], patience: usize, factor: f64, lr: f64) -> f64 {
    let mut s = Stagnation::new(patience, usize::MAX, 1e-9);
    history
        .iter()
        .fold(lr, |lr, &v| if s.observe(v).decay { lr * factor } else { lr })
}

/// True when the last `patience` epochs of `history` brought no improvement.
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    let mut s = Stagnation::new(usize::MAX, patience, 1e-9);
    history.iter().map(|&v| s.observe(v).stop).last().unwrap_or(false)
}
