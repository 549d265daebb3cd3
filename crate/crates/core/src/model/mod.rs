//! The convolutional VAE: architecture, losses, training and checkpoints.

mod checkpoint;
mod loss;
mod profile;
mod train;
mod vae;

pub use checkpoint::{ModelCheckpoint, NamedArray, TrainingMetadata, FORMAT_VERSION, MAGIC};
pub use loss::{
    kl_grads, kl_loss, kl_terms, reconstruction_grad, reconstruction_loss, reparameterize,
    total_loss, LossBreakdown, BCE_EPSILON, DEFAULT_KL_COEFFICIENT,
};
pub use profile::ArchitectureProfile;
pub use train::{
    batch_gradients, train, train_with_progress, write_history_csv, EpochRecord, TrainConfig,
    TrainHistory,
};
pub use vae::{EncoderOutput, ModelSummary, SummaryRow, Vae};
