//! Inpainting autoencoder: architecture, model, checkpoint file and trainer.

pub mod arch;
pub mod checkpoint;
pub mod model;
pub mod train;

pub use arch::ArchConfig;
pub use checkpoint::{Checkpoint, TrainingMeta};
pub use model::{Autoencoder, Code};
pub use train::{train, train_with_progress, TrainConfig};
