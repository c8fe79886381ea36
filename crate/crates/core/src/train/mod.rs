//! Losses, optimizer, learning-rate schedule, metrics and the training loop.

mod adam;
pub mod loss;
mod metrics;
mod scheduler;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use loss::{cross_entropy, one_hot, positive_weight, weighted_bce, LossKind, LossOutput};
pub use metrics::{evaluate, ConfusionMatrix, Evaluation};
pub use scheduler::PlateauScheduler;
pub use trainer::{batches, train, train_with, EpochRecord, TrainOptions, TrainOutcome};
