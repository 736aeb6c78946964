//! Loss, Adam, plateau decay with early stopping, the epoch loop and the
//! hold-out plus k-fold protocol.

mod cv;
mod fit;
mod optim;

pub use cv::{model_dims, run_cv, run_fold, Aggregate, CvOutcome, Experiment, FitObserver, FitStage, FoldOutcome};
pub use fit::{
    cross_entropy_loss, evaluate_loss, fit, weight_penalty, EpochRecord, Monitor, RunRecord, StopReason, TrainConfig,
    PROB_FLOOR,
};
pub use optim::{early_stop, plateau_scheduler, Adam, AdamConfig, Observation, Stagnation};

#[cfg(test)]
mod tests;
