//! Encoder, grapheme decoder, mel branch, duration predictor and training.

mod config;
mod data;
mod duration;
mod error;
mod io;
mod net;
mod train;

pub use config::ModelConfig;
pub use data::{split_indices, DataContext, TrainingExample};
pub use duration::{durations_from_path, uniform_durations, DurationPredictor, DurationTable};
pub use error::ModelError;
pub use net::{length_regulate, MelNorm, Model};
pub use train::{EpochMetrics, JointLoss, LossNodes, StopHook, TrainOptions, TrainOutcome};

pub use crate::audio::DurationVector;
