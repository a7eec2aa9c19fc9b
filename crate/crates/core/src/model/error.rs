use thiserror::Error;

use crate::audio::AudioError;
use crate::nn::checkpoint::CheckpointError;
use crate::nn::TensorError;
use crate::phonology::PhonologyError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("token index {index} out of range for vocabulary of {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("input of {len} phonemes exceeds the limit of {max}")]
    InputTooLong { len: usize, max: usize },
    #[error("history of {len} characters exceeds the limit of {max}")]
    HistoryTooLong { len: usize, max: usize },
    #[error("history must start with BOS")]
    MissingBos,
    #[error("expected {expected} durations, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("durations sum to {sum} but the spectrogram has {frames} frames")]
    FrameMismatch { sum: usize, frames: usize },
    #[error("duration predictor has not been trained")]
    NotTrained,
    #[error("audio feedback is on but the example carries no spectrogram or durations")]
    MissingModalities,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint does not match this build: {0}")]
    Incompatible(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
