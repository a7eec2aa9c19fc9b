//! Probe configuration, read from TOML.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cache::ProbeCache;
use crate::clock::Clock;
use crate::dns::{FixtureResolver, Resolver, UdpResolver};
use crate::error::ProbeError;
use crate::fqdn::DEFAULT_TLDS;
use crate::psl::PublicSuffixList;
use crate::ratelimit::TokenBucket;
use crate::registry::{FixtureRegistry, HttpRegistry, RegistryTransport, PYPI_METADATA_URL};
use crate::reputation::{FixtureProvider, ReputationProvider};
use crate::retry::RetryPolicy;
use crate::whois::{FixtureWhois, TcpWhois, WhoisSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Recorded responses under `fixtures_dir`.
    #[default]
    Fixture,
    /// Real DNS, whois and registry traffic.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub mode: Mode,
    /// Root with `dns/`, `whois/`, `registry/` and `reputation/<provider>/`.
    pub fixtures_dir: Option<PathBuf>,
    pub tlds: Vec<String>,
    /// Reputation providers, by fixture directory name. Live mode has no
    /// built-in provider adapters, so this must be empty there.
    pub providers: Vec<String>,
    pub rate_per_second: f64,
    pub burst: u32,
    pub concurrency: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub cache_ttl_secs: u64,
    /// Write `null` timestamps so reruns are byte-identical.
    pub normalize_timestamps: bool,
    pub max_package_len: usize,
    pub public_suffix_list: Option<PathBuf>,
    pub resolver: String,
    pub dns_timeout_ms: u64,
    pub whois_server: String,
    pub whois_timeout_ms: u64,
    /// Registry metadata path; `{name}` is replaced by the package name.
    pub registry_url: String,
    pub http_timeout_ms: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fixture,
            fixtures_dir: None,
            tlds: DEFAULT_TLDS.iter().map(|s| s.to_string()).collect(),
            providers: Vec::new(),
            rate_per_second: 10.0,
            burst: 1,
            concurrency: 8,
            retries: 2,
            backoff_ms: 500,
            cache_dir: None,
            cache_ttl_secs: 86_400,
            normalize_timestamps: false,
            max_package_len: 20,
            public_suffix_list: None,
            resolver: "1.1.1.1:53".into(),
            dns_timeout_ms: 2_000,
            whois_server: "whois.iana.org".into(),
            whois_timeout_ms: 5_000,
            registry_url: PYPI_METADATA_URL.into(),
            http_timeout_ms: 10_000,
        }
    }
}

impl ProbeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ProbeError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ProbeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a TOML file. Relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProbeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ProbeError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    /// Resolve relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.fixtures_dir,
            &mut self.cache_dir,
            &mut self.public_suffix_list,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: String| Err(ProbeError::Config(m));
        if self.tlds.is_empty() {
            return Err(ProbeError::NoTlds);
        }
        if !(self.rate_per_second.is_finite() && self.rate_per_second > 0.0) {
            return bad(format!(
                "rate_per_second must be positive, got {}",
                self.rate_per_second
            ));
        }
        if self.burst == 0 || self.concurrency == 0 {
            return bad("burst and concurrency must be at least 1".into());
        }
        if self.max_package_len == 0 {
            return bad("max_package_len must be at least 1".into());
        }
        match self.mode {
            Mode::Fixture if self.fixtures_dir.is_none() => bad("fixture mode needs fixtures_dir".into()),
            Mode::Live if !self.providers.is_empty() => {
                bad("live mode has no reputation provider adapters; leave providers empty".into())
            }
            _ => Ok(()),
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            base: Duration::from_millis(self.backoff_ms),
        }
    }

    pub fn suffix_list(&self) -> Result<PublicSuffixList, ProbeError> {
        match &self.public_suffix_list {
            Some(p) => PublicSuffixList::load(p),
            None => Ok(PublicSuffixList::bundled()),
        }
    }
}

type Transports = (
    Box<dyn Resolver>,
    Box<dyn WhoisSource>,
    Vec<Box<dyn ReputationProvider>>,
    Box<dyn RegistryTransport>,
);

/// Everything the pipelines talk to.
pub struct Services {
    pub resolver: Box<dyn Resolver>,
    pub whois: Box<dyn WhoisSource>,
    pub providers: Vec<Box<dyn ReputationProvider>>,
    pub registry: Box<dyn RegistryTransport>,
    pub clock: Arc<dyn Clock>,
    pub limiter: TokenBucket,
    pub cache: ProbeCache,
    pub retry: RetryPolicy,
}

impl Services {
    pub fn from_config(cfg: &ProbeConfig, clock: Arc<dyn Clock>) -> Result<Self, ProbeError> {
        cfg.validate()?;
        let limiter = TokenBucket::new(cfg.rate_per_second, cfg.burst)?;
        let ttl = Duration::from_secs(cfg.cache_ttl_secs);
        let cache = match &cfg.cache_dir {
            Some(dir) => ProbeCache::open(dir, ttl)?,
            None => ProbeCache::memory(ttl),
        };
        let (resolver, whois, providers, registry): Transports = match cfg.mode {
            Mode::Fixture => {
                let root = cfg.fixtures_dir.as_ref().expect("validated");
                if !root.is_dir() {
                    return Err(ProbeError::Config(format!(
                        "fixtures_dir {} is not a directory",
                        root.display()
                    )));
                }
                (
                    Box::new(FixtureResolver::new(root.join("dns"))),
                    Box::new(FixtureWhois::new(root.join("whois"))),
                    cfg.providers
                        .iter()
                        .map(|p| {
                            Box::new(FixtureProvider::new(p.clone(), root.join("reputation").join(p)))
                                as Box<dyn ReputationProvider>
                        })
                        .collect(),
                    Box::new(FixtureRegistry::new(root.join("registry"))),
                )
            }
            Mode::Live => {
                let server: SocketAddr = cfg
                    .resolver
                    .parse()
                    .map_err(|e| ProbeError::Config(format!("resolver {:?}: {e}", cfg.resolver)))?;
                (
                    Box::new(UdpResolver::new(server, Duration::from_millis(cfg.dns_timeout_ms))),
                    Box::new(TcpWhois::new(
                        cfg.whois_server.clone(),
                        Duration::from_millis(cfg.whois_timeout_ms),
                    )),
                    Vec::new(),
                    Box::new(HttpRegistry::new(
                        cfg.registry_url.clone(),
                        Duration::from_millis(cfg.http_timeout_ms),
                    )?),
                )
            }
        };
        Ok(Self {
            resolver,
            whois,
            providers,
            registry,
            clock,
            limiter,
            cache,
            retry: cfg.retry(),
        })
    }
}
