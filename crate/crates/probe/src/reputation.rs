//! Reputation providers. Verdicts are opaque: each provider decides what
//! counts as malicious or suspicious.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::ProbeError;
use crate::fixture::FixtureDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Malicious,
    Suspicious,
    Clean,
    /// The provider has no information on the name.
    Absent,
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MALICIOUS" => Ok(Self::Malicious),
            "SUSPICIOUS" => Ok(Self::Suspicious),
            "CLEAN" => Ok(Self::Clean),
            "ABSENT" => Ok(Self::Absent),
            other => Err(other.to_string()),
        }
    }
}

/// A source of verdicts. Timeouts and upstream failures must come back as
/// errors, never as `Clean`.
pub trait ReputationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn query(&self, fqdn: &str) -> Result<Verdict, ProbeError>;
}

/// Verdicts from `<fixtures>/<fqdn>.status` holding `MALICIOUS`,
/// `SUSPICIOUS`, `CLEAN` or `ABSENT`; any other status is a provider
/// failure. Names without fixtures are `Absent`.
#[derive(Debug)]
pub struct FixtureProvider {
    name: String,
    dir: FixtureDir,
}

impl FixtureProvider {
    pub fn new(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            dir: FixtureDir::new(dir),
        }
    }
}

impl ReputationProvider for FixtureProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn query(&self, fqdn: &str) -> Result<Verdict, ProbeError> {
        let Some(resp) = self.dir.fetch(fqdn, "ABSENT")? else {
            return Ok(Verdict::Absent);
        };
        resp.status.parse().map_err(|status| ProbeError::Provider {
            provider: self.name.clone(),
            name: fqdn.to_string(),
            reason: status,
        })
    }
}
