//! Seeded head training with Adam, mean BCE, early stopping on validation
//! loss and best-checkpoint retention.

mod checkpoint;
mod config;
mod early_stop;
mod run;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use early_stop::{replay, EarlyStopping, Verdict};
pub use run::{
    mean_loss, paired_seed_protocol, predict, train, training_step, FeatureSet, PairedRuns, StepLoss, StopReason, TrainRun, Trainer,
};
