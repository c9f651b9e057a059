//! Joint training of grounder and translator.
//!
//! Each step runs the grounder, cuts a fixed-length clip at the predicted
//! interval, and scores the translator on it. The summed loss
//! `ground + lambda * nll` is backpropagated into both models; the clip
//! indices are treated as constants, so the translator's signal reaches the
//! grounder through the shared word embedding and the common update.

mod checkpoint;
mod config;
mod data;
mod model;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{config_hash, Mode, ModelConfig, TrainConfig, PRESET_NAMES};
pub use data::{Dataset, PreparedData, PreparedSample, PreparedVideo};
pub use model::{build_vocabularies, ClosedLoopModel};
pub use trainer::{
    accumulate_batch, evaluate, joint_loss, lr_schedule, predict, run_experiment, train_epoch,
    BatchOutcome, EpochRecord, Evaluation, ExperimentOutcome, Trainer,
};
