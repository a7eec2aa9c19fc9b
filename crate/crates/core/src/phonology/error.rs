use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhonologyError {
    #[error("empty input")]
    EmptyInput,
    #[error("grapheme-to-phoneme backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("word {0:?} not in dictionary")]
    NotInDictionary(String),
    #[error("no in-inventory replacement for phonemes {0:?}")]
    UnmappablePhoneme(Vec<String>),
    #[error("word list is empty")]
    EmptyWordlist,
    #[error("invalid inventory: {0}")]
    InvalidInventory(String),
    #[error("character {0:?} is not in the grapheme vocabulary")]
    NotInVocabulary(char),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PhonologyError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
