use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("signal has {len} samples, fewer than the {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("invalid mel configuration: {0}")]
    InvalidConfig(String),
    #[error("no audio profile for phoneme {0:?}")]
    MissingProfile(String),
    #[error("invalid audio profile: {0}")]
    InvalidProfile(String),
    #[error("waveform contains non-finite samples")]
    NonFinite,
    #[error("unsupported wav format: {0}")]
    WavFormat(String),
    #[error("wav error on {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AudioError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
