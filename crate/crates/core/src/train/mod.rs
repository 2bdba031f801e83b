//! Training and scoring.

pub mod adam;
mod config;
pub mod score;
mod trainer;

pub use adam::{Adam, OptimizerState};
pub use config::{RunConfig, Selection, TrainConfig};
pub use score::{evaluate_checkpoint, score_dataset, score_split};
pub use trainer::{
    batch_loss_and_grads, cross_entropy, loss_history_csv, mean_loss, train, LossRecord, TrainOutcome,
    FINAL_CHECKPOINT, LOSS_FILE,
};
