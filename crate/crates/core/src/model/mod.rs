//! The imputation network, its training loop and checkpoints.

pub mod checkpoint;
mod config;
pub mod layers;
pub mod params;
mod trainer;

pub use config::{Mode, TrainConfig};
pub use trainer::{EpochStats, Imputation, Trainer};
