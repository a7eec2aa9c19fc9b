//! Public-suffix matching and second-level label extraction.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ProbeError;
use crate::fqdn::validate_label;

const BUNDLED: &str = include_str!("../data/public_suffix.dat");

/// Rules in the standard one-rule-per-line format: `//` comments, `*.`
/// wildcards and `!` exceptions.
#[derive(Debug, Clone, Default)]
pub struct PublicSuffixList {
    rules: HashSet<String>,
    wildcards: HashSet<String>,
    exceptions: HashSet<String>,
}

impl PublicSuffixList {
    pub fn parse(text: &str) -> Self {
        let mut list = Self::default();
        for line in text.lines() {
            // Only the first whitespace-delimited field of a line is the rule.
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            if rule.starts_with("//") {
                continue;
            }
            let rule = rule.trim_end_matches('.').to_lowercase();
            if let Some(rest) = rule.strip_prefix('!') {
                list.exceptions.insert(rest.to_string());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                list.wildcards.insert(rest.to_string());
            } else {
                list.rules.insert(rule);
            }
        }
        list
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProbeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ProbeError::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The excerpt shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED)
    }

    pub fn len(&self) -> usize {
        self.rules.len() + self.wildcards.len() + self.exceptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trailing labels of `labels` forming the public suffix.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        let mut best = 1; // implicit "*" rule
        for k in 1..=n {
            let tail = labels[n - k..].join(".");
            if self.exceptions.contains(&tail) {
                return k - 1;
            }
            if self.rules.contains(&tail) {
                best = best.max(k);
            }
            if k < n && self.wildcards.contains(&tail) {
                best = best.max(k + 1);
            }
        }
        best
    }

    /// The public suffix of a normalized domain.
    pub fn suffix_of<'a>(&self, domain: &'a str) -> &'a str {
        let labels: Vec<&str> = domain.split('.').collect();
        let k = self.suffix_len(&labels);
        let skip: usize = labels[..labels.len() - k].iter().map(|l| l.len() + 1).sum();
        &domain[skip..]
    }
}

/// A target domain and its registrable label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetName {
    pub raw: String,
    pub sld: String,
    /// Registrable domain, `sld` plus its public suffix.
    pub registrable: String,
}

/// Lowercase, drop a trailing root dot and check hostname syntax.
pub fn normalize_domain(domain: &str) -> Result<String, ProbeError> {
    let d = domain.trim().trim_end_matches('.').to_lowercase();
    let bad = |why: &str| ProbeError::InvalidDomain(domain.to_string(), why.to_string());
    if d.is_empty() {
        return Err(bad("empty"));
    }
    if d.len() > 253 {
        return Err(bad("longer than 253 characters"));
    }
    for label in d.split('.') {
        validate_label(label).map_err(|why| bad(&why))?;
    }
    Ok(d)
}

/// The label immediately left of the longest matching public suffix.
pub fn extract_sld(domain: &str, psl: &PublicSuffixList) -> Result<TargetName, ProbeError> {
    let d = normalize_domain(domain)?;
    let labels: Vec<&str> = d.split('.').collect();
    let k = psl.suffix_len(&labels);
    if k >= labels.len() {
        return Err(ProbeError::NoRegistrableLabel(domain.to_string()));
    }
    let i = labels.len() - k - 1;
    Ok(TargetName {
        raw: domain.to_string(),
        sld: labels[i].to_string(),
        registrable: labels[i..].join("."),
    })
}
