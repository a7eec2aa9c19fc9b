//! Package-registry existence probing.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::ProbeError;
use crate::fixture::FixtureDir;
use crate::retry::RetryPolicy;

pub const PYPI_METADATA_URL: &str = "https://pypi.org/pypi/{name}/json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// GET of a package's JSON metadata path. Transport failures are errors;
/// any HTTP status, including 404, is a response.
pub trait RegistryTransport: Send + Sync {
    fn get(&self, name: &str) -> Result<HttpResponse, ProbeError>;
}

/// Live registry over HTTPS. `template` contains `{name}`.
#[derive(Debug)]
pub struct HttpRegistry {
    template: String,
    agent: ureq::Agent,
}

impl HttpRegistry {
    pub fn new(template: impl Into<String>, timeout: Duration) -> Result<Self, ProbeError> {
        let template = template.into();
        if !template.contains("{name}") {
            return Err(ProbeError::Config(format!("registry URL {template:?} lacks {{name}}")));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(timeout)
            .user_agent(concat!("soundsquat/", env!("CARGO_PKG_VERSION")))
            .build();
        Ok(Self { template, agent })
    }
}

impl RegistryTransport for HttpRegistry {
    fn get(&self, name: &str) -> Result<HttpResponse, ProbeError> {
        let url = self.template.replace("{name}", name);
        let read = |resp: ureq::Response| {
            let status = resp.status();
            resp.into_string()
                .map(|body| HttpResponse { status, body })
                .map_err(|e| ProbeError::RegistryUnavailable(name.to_string(), e.to_string()))
        };
        match self.agent.get(&url).call() {
            Ok(resp) => read(resp),
            Err(ureq::Error::Status(_, resp)) => read(resp),
            Err(e) => Err(ProbeError::RegistryUnavailable(name.to_string(), e.to_string())),
        }
    }
}

/// Responses from `<fixtures>/<name>.status` (an HTTP status code) and
/// `<name>.json`. Missing fixtures answer 404.
#[derive(Debug)]
pub struct FixtureRegistry {
    dir: FixtureDir,
}

impl FixtureRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: FixtureDir::new(dir),
        }
    }
}

impl RegistryTransport for FixtureRegistry {
    fn get(&self, name: &str) -> Result<HttpResponse, ProbeError> {
        let Some(resp) = self.dir.fetch(name, "200")? else {
            return Ok(HttpResponse {
                status: 404,
                body: String::new(),
            });
        };
        let status = resp.status.parse().map_err(|_| ProbeError::Fixture {
            path: self.dir.root().join(format!("{name}.status")),
            reason: format!("status {:?} is not an HTTP code", resp.status),
        })?;
        Ok(HttpResponse {
            status,
            body: resp.body.unwrap_or_default(),
        })
    }
}

/// What the registry says about an existing package. Stars and forks are
/// read from optional top-level `stars`/`forks` fields; the PyPI JSON API
/// itself does not carry them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageMeta {
    pub version: Option<String>,
    pub summary: Option<String>,
    pub stars: Option<u64>,
    pub forks: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageProbe {
    pub exists: bool,
    pub metadata: Option<PackageMeta>,
    pub attempts: u32,
}

pub fn parse_metadata(name: &str, body: &str) -> Result<PackageMeta, ProbeError> {
    let bad = |why: &str| ProbeError::MalformedMetadata(name.to_string(), why.to_string());
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| bad(&e.to_string()))?;
    let info = v
        .get("info")
        .and_then(|i| i.as_object())
        .ok_or_else(|| bad("no \"info\" object"))?;
    let text = |k: &str| {
        info.get(k)
            .and_then(|x| x.as_str())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    let count = |k: &str| -> Result<Option<u64>, ProbeError> {
        match v.get(k) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(x) => x.as_u64().map(Some).ok_or_else(|| bad(&format!("{k} is not a count"))),
        }
    };
    Ok(PackageMeta {
        version: text("version"),
        summary: text("summary"),
        stars: count("stars")?,
        forks: count("forks")?,
    })
}

/// 200 → exists with metadata, 404 → absent, anything else is retried and
/// ends in `RegistryUnavailable`.
pub fn probe_package(
    name: &str,
    registry: &dyn RegistryTransport,
    retry: &RetryPolicy,
    clock: &dyn Clock,
) -> Result<PackageProbe, ProbeError> {
    let (resp, attempts) = retry.run(clock, &format!("registry {name}"), || {
        let r = registry.get(name)?;
        match r.status {
            200 | 404 => Ok(r),
            s => Err(ProbeError::RegistryUnavailable(name.to_string(), format!("HTTP {s}"))),
        }
    })?;
    if resp.status == 404 {
        return Ok(PackageProbe {
            exists: false,
            metadata: None,
            attempts,
        });
    }
    Ok(PackageProbe {
        exists: true,
        metadata: Some(parse_metadata(name, &resp.body)?),
        attempts,
    })
}
