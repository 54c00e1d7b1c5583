//! Optimization: learning-rate schedules, Adam and the training loop.

pub mod adam;
pub mod schedule;
pub mod trainer;

pub use adam::{Adam, AdamConfig};
pub use schedule::{schedule_lr, Schedule};
pub use trainer::{dev_bleu, train, train_step, MetricsLog, MetricsRecord, TrainConfig};
