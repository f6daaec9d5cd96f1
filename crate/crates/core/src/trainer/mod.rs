//! Configuration, model assembly, SGD training and checkpoints.

mod checkpoint;
mod config;
mod network;
mod train;

pub use checkpoint::{Checkpoint, EpochRecord, CHECKPOINT_MANIFEST};
pub use config::{lr_at_epoch, TrainConfig};
pub use network::{Architecture, FeatureNorm, Model, FUSION_A2V, FUSION_V2A, HEAD};
pub use train::{epoch_plan, mae_loss, train, train_on, training_form};
