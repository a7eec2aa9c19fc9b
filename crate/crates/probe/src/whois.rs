//! Whois retrieval and registrant-organization comparison.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::time::Duration;

use crate::error::ProbeError;
use crate::fixture::FixtureDir;

pub trait WhoisSource: Send + Sync {
    /// Raw whois text for `domain`, or `None` when the registry has no record.
    fn lookup(&self, domain: &str) -> Result<Option<String>, ProbeError>;
}

/// Whois text from `<fixtures>/<domain>.txt`. A `.status` of `TIMEOUT` or
/// `ERROR` fails the lookup; a missing fixture means no record.
#[derive(Debug)]
pub struct FixtureWhois {
    dir: FixtureDir,
}

impl FixtureWhois {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: FixtureDir::new(dir),
        }
    }
}

impl WhoisSource for FixtureWhois {
    fn lookup(&self, domain: &str) -> Result<Option<String>, ProbeError> {
        match self.dir.fetch(domain, "OK")? {
            None => Ok(None),
            Some(r) if r.status.eq_ignore_ascii_case("OK") => Ok(r.body),
            Some(r) => Err(ProbeError::Whois(domain.to_string(), r.status)),
        }
    }
}

/// Port-43 whois: ask the root server for the TLD's referral, then query
/// the referred server.
#[derive(Debug, Clone)]
pub struct TcpWhois {
    pub root: String,
    pub timeout: Duration,
}

impl TcpWhois {
    pub fn new(root: impl Into<String>, timeout: Duration) -> Self {
        Self {
            root: root.into(),
            timeout,
        }
    }

    fn ask(&self, server: &str, query: &str) -> Result<String, ProbeError> {
        let fail = |e: std::io::Error| ProbeError::Whois(query.to_string(), format!("{server}: {e}"));
        let addr = if server.contains(':') {
            server.to_string()
        } else {
            format!("{server}:43")
        };
        let addrs: Vec<_> = std::net::ToSocketAddrs::to_socket_addrs(&addr).map_err(fail)?.collect();
        let first = addrs
            .first()
            .ok_or_else(|| ProbeError::Whois(query.to_string(), format!("{server}: no address")))?;
        let mut stream = TcpStream::connect_timeout(first, self.timeout).map_err(fail)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(fail)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(fail)?;
        stream.write_all(format!("{query}\r\n").as_bytes()).map_err(fail)?;
        let mut buf = Vec::new();
        stream.read_to_end(&mut buf).map_err(fail)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }
}

impl WhoisSource for TcpWhois {
    fn lookup(&self, domain: &str) -> Result<Option<String>, ProbeError> {
        let tld = domain.rsplit('.').next().unwrap_or(domain);
        let referral = self.ask(&self.root, tld)?;
        let server = field(&referral, &["refer", "whois"])
            .ok_or_else(|| ProbeError::Whois(domain.to_string(), format!("no whois server for .{tld}")))?;
        let text = self.ask(&server, domain)?;
        let lower = text.to_lowercase();
        let absent = [
            "no match",
            "not found",
            "no entries found",
            "no data found",
            "status: free",
        ];
        if absent.iter().any(|m| lower.contains(m)) {
            return Ok(None);
        }
        Ok(Some(text))
    }
}

/// First value of any of `keys` (case-insensitive) in `key: value` lines.
/// Keys are tried in the order given.
fn field(text: &str, keys: &[&str]) -> Option<String> {
    for key in keys {
        for line in text.lines() {
            let Some((k, v)) = line.split_once(':') else { continue };
            let v = v.trim();
            if k.trim().eq_ignore_ascii_case(key) && !v.is_empty() {
                return Some(v.to_string());
            }
        }
    }
    None
}

/// Registrant organization from whois text. Falls back through the field
/// names used by common registries.
pub fn registrant_org(text: &str) -> Option<String> {
    field(
        text,
        &[
            "Registrant Organization",
            "Registrant Organisation",
            "Registrant Org",
            "org",
            "Organization",
            "OrgName",
            "Registrant",
            "owner",
        ],
    )
}

const CORPORATE_TOKENS: &[&str] = &[
    "inc",
    "incorporated",
    "llc",
    "corp",
    "corporation",
    "ltd",
    "limited",
    "co",
    "company",
    "plc",
    "gmbh",
    "ag",
    "sa",
    "bv",
    "nv",
    "srl",
    "pty",
    "llp",
    "lp",
    "ooo",
];

const PRIVACY_MARKERS: &[&str] = &[
    "privacy",
    "proxy",
    "redacted",
    "private",
    "withheld",
    "not disclosed",
    "data protected",
    "whoisguard",
    "anonymi",
    "gdpr",
];

/// Case-folded, punctuation-free organization name without corporate
/// designators, e.g. "Netflix, Inc." → "netflix".
pub fn normalize_owner(org: &str) -> String {
    // Dots and apostrophes join ("L.L.C." → "llc"); other punctuation splits.
    let folded: String = org
        .to_lowercase()
        .chars()
        .filter(|c| !matches!(c, '.' | '\''))
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = folded.split_whitespace().collect();
    let kept: Vec<&str> = words
        .iter()
        .copied()
        .filter(|w| !CORPORATE_TOKENS.contains(w))
        .collect();
    if kept.is_empty() {
        words.join(" ")
    } else {
        kept.join(" ")
    }
}

/// Registrants that hide the real owner. These never establish ownership.
pub fn is_privacy_owner(org: &str) -> bool {
    let lower = org.to_lowercase();
    PRIVACY_MARKERS.iter().any(|m| lower.contains(m))
}

/// Whether two organization strings name the same identifiable owner.
pub fn same_owner(a: &str, b: &str) -> bool {
    if is_privacy_owner(a) || is_privacy_owner(b) {
        return false;
    }
    let (a, b) = (normalize_owner(a), normalize_owner(b));
    !a.is_empty() && a == b
}
