//! Candidate hostname construction.

use serde::{Deserialize, Serialize};

use crate::error::ProbeError;

/// Candidate TLDs used when none are configured.
pub const DEFAULT_TLDS: [&str; 10] = ["com", "ca", "org", "ru", "net", "au", "uk", "in", "ir", "de"];

pub const MAX_LABEL_LEN: usize = 63;
pub const MAX_HOSTNAME_LEN: usize = 253;

/// Hostname label rules: letters, digits and hyphens, 1 to 63 characters,
/// no hyphen at either end.
pub fn validate_label(label: &str) -> Result<(), String> {
    if label.is_empty() {
        return Err("empty label".into());
    }
    if label.len() > MAX_LABEL_LEN {
        return Err(format!("label longer than {MAX_LABEL_LEN} characters"));
    }
    if let Some(c) = label.chars().find(|c| !(c.is_ascii_alphanumeric() || *c == '-')) {
        return Err(format!("character {c:?} is not a letter, digit or hyphen"));
    }
    if label.starts_with('-') || label.ends_with('-') {
        return Err("label starts or ends with a hyphen".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDomain {
    /// Target registrable domain the candidate imitates.
    pub target: String,
    pub label: String,
    pub tld: String,
    pub fqdn: String,
}

/// A candidate label that cannot form a hostname.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidLabel {
    pub target: String,
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FqdnSet {
    pub domains: Vec<CandidateDomain>,
    pub invalid: Vec<InvalidLabel>,
}

/// Cross product of every target's candidate labels with `tlds`, in input
/// order. Labels that break hostname rules are reported and skipped.
pub fn build_fqdns<L: AsRef<str>, S: AsRef<str>>(
    candidates: &[(String, Vec<L>)],
    tlds: &[S],
) -> Result<FqdnSet, ProbeError> {
    if tlds.is_empty() {
        return Err(ProbeError::NoTlds);
    }
    let tlds: Vec<String> = tlds
        .iter()
        .map(|t| t.as_ref().trim().trim_start_matches('.').to_lowercase())
        .collect();
    for t in &tlds {
        for label in t.split('.') {
            validate_label(label).map_err(|why| ProbeError::Config(format!("TLD {t:?}: {why}")))?;
        }
    }
    let mut out = FqdnSet::default();
    for (target, labels) in candidates {
        for label in labels {
            let label = label.as_ref().to_lowercase();
            if let Err(reason) = validate_label(&label) {
                log::debug!("skipping candidate {label:?} for {target}: {reason}");
                out.invalid.push(InvalidLabel {
                    target: target.clone(),
                    label,
                    reason,
                });
                continue;
            }
            for tld in &tlds {
                let fqdn = format!("{label}.{tld}");
                if fqdn.len() > MAX_HOSTNAME_LEN {
                    out.invalid.push(InvalidLabel {
                        target: target.clone(),
                        label: label.clone(),
                        reason: format!("{fqdn} is longer than {MAX_HOSTNAME_LEN} characters"),
                    });
                    continue;
                }
                out.domains.push(CandidateDomain {
                    target: target.clone(),
                    label: label.clone(),
                    tld: tld.clone(),
                    fqdn,
                });
            }
        }
    }
    Ok(out)
}
