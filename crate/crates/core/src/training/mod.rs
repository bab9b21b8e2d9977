//! Mini-batch teacher-forced training: batching, clipping, optimizer steps
//! and checkpoints.

mod batch;
mod checkpoint;
mod optim;
mod trainer;

pub use batch::{batched_loss_and_grads, make_batches, Batch, IdGrid};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TokenizerRef, TokenizerRefs, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optim::{apply_update, clip_gradients, global_norm, Algorithm, OptimizerConfig, OptimizerState};
pub use trainer::{exact_match_accuracy, train, train_from, Dataset, EpochMetrics, TrainConfig, TrainOutcome};

pub(crate) use batch::accumulate_batch;
