//! Adam and the shared mini-batch training loop.

mod adam;
mod train;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use train::{
    minibatch_loss_scale, minibatches, train_loop, write_history_csv, EpochRecord, TrainConfig, TrainOutcome, TrainTask,
};
