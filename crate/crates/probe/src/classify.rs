//! Verdict combination. Pure: the same inputs always give the same record.

use serde::{Deserialize, Serialize};

use crate::registry::PackageMeta;
use crate::reputation::Verdict;
use crate::whois::{is_privacy_owner, registrant_org, same_owner};

/// Version of the persisted record layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    NotFound,
    TargetOwned,
    Malicious,
    Suspicious,
    Unknown,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Self::NotFound,
        Self::TargetOwned,
        Self::Malicious,
        Self::Suspicious,
        Self::Unknown,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderVerdict {
    pub provider: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Domain,
    Package,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// DNS records that established existence.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<ProviderVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PackageMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub schema: u32,
    pub kind: RecordKind,
    /// Candidate FQDN or package name.
    pub name: String,
    /// The target it imitates.
    pub target: String,
    pub exists: bool,
    pub classification: Classification,
    pub evidence: Evidence,
    /// Seconds since the epoch; `None` when timestamps are normalized.
    pub timestamp: Option<u64>,
}

/// Everything `classify` looks at.
#[derive(Debug, Clone, Default)]
pub struct ClassifyInput<'a> {
    pub exists: bool,
    pub verdicts: &'a [ProviderVerdict],
    pub target_whois: Option<&'a str>,
    pub candidate_whois: Option<&'a str>,
}

/// Decision order: absent → NotFound, any Malicious → Malicious, any
/// Suspicious → Suspicious, matching registrant organization → TargetOwned,
/// otherwise Unknown. Returns the class and the evidence behind it.
pub fn classify(input: &ClassifyInput) -> (Classification, Evidence) {
    let mut ev = Evidence::default();
    if !input.exists {
        return (Classification::NotFound, ev);
    }
    ev.verdicts = input.verdicts.to_vec();
    let target_owner = input.target_whois.and_then(registrant_org);
    let candidate_owner = input.candidate_whois.and_then(registrant_org);
    let any = |v: Verdict| input.verdicts.iter().any(|p| p.verdict == v);
    let class = if any(Verdict::Malicious) {
        Classification::Malicious
    } else if any(Verdict::Suspicious) {
        Classification::Suspicious
    } else {
        match (&target_owner, &candidate_owner) {
            (Some(t), Some(c)) if same_owner(t, c) => Classification::TargetOwned,
            (Some(t), Some(c)) => {
                for o in [t, c] {
                    if is_privacy_owner(o) {
                        ev.notes.push(format!("registrant {o:?} is a privacy service"));
                    }
                }
                Classification::Unknown
            }
            _ => {
                let missing = match (&target_owner, &candidate_owner) {
                    (None, None) => "target and candidate",
                    (None, _) => "target",
                    _ => "candidate",
                };
                ev.notes.push(format!(
                    "no registrant organization for {missing}; owner comparison skipped"
                ));
                Classification::Unknown
            }
        }
    };
    ev.target_owner = target_owner;
    ev.candidate_owner = candidate_owner;
    (class, ev)
}
