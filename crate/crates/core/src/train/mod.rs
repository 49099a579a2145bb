//! Losses, optimizers, schedules, sampling and the epoch loop.

mod fit;
mod loss;
mod optim;
mod sampling;

pub use fit::{fit, FitReport, OptimizerKind, TrainConfig, VAL_FRACTION};
pub use loss::{combined_loss, cross_entropy};
pub use optim::{adagrad_step, adam_step, step_decay, OptimizerState};
pub use sampling::{augment, oversample, stratified_holdout};
