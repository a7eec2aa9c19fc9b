use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("invalid domain {0:?}: {1}")]
    InvalidDomain(String, String),
    #[error("{0:?} is itself a public suffix")]
    NoRegistrableLabel(String),
    #[error("no TLDs configured")]
    NoTlds,
    #[error("resolver timed out for {0}")]
    ResolverTimeout(String),
    #[error("resolver error for {0}: {1}")]
    ResolverError(String, String),
    #[error("registry unavailable for {0}: {1}")]
    RegistryUnavailable(String, String),
    #[error("malformed registry metadata for {0}: {1}")]
    MalformedMetadata(String, String),
    #[error("reputation provider {provider} failed for {name}: {reason}")]
    Provider {
        provider: String,
        name: String,
        reason: String,
    },
    #[error("whois lookup failed for {0}: {1}")]
    Whois(String, String),
    #[error("fixture {path}: {reason}")]
    Fixture { path: PathBuf, reason: String },
    #[error("candidate generation failed for {0}: {1}")]
    Generation(String, String),
    #[error("{0}: record schema {1} is not supported")]
    UnsupportedSchema(PathBuf, u32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ProbeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors worth another attempt: timeouts and transient upstream failures.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            Self::ResolverTimeout(_) | Self::ResolverError(..) | Self::RegistryUnavailable(..) | Self::Whois(..)
        ) || matches!(self, Self::Provider { .. })
    }
}
