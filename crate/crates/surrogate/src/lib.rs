//! Spectral-operator surrogate for the forward model, with hand-rolled
//! reverse-mode differentiation through every layer so assimilation can ask
//! for gradients with respect to the log-permeability input.

pub mod adam;
pub mod checkpoint;
pub mod encode;
pub mod fft;
pub mod model;
pub mod predict;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use encode::{encode_input, target_from_trajectory, Dataset, Normalization};
pub use model::{Activation, FnoConfig, ForwardCache, Gradients, SurrogateWeights, PROJECT_HIDDEN};
pub use predict::SurrogateModel;
pub use train::{train, EpochStats, TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite activations in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("dataset too small: {n} samples, need at least {min}")]
    DatasetTooSmall { n: usize, min: usize },

    #[error(transparent)]
    Core(#[from] gcs_core::CoreError),

    #[error(transparent)]
    Sim(#[from] gcs_sim::SimError),
}
