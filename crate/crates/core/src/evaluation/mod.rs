//! Homophone-retrieval harness: set construction, coverage, rank ECDF
//! against a uniform baseline, and the audio-feedback ablation diff.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{batch_generate, CountStats, GenerateError, GenerationParams, Target};
use crate::model::Model;
use crate::phonology::{strip_delimiters, G2pBackend, PhonologyError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Phonology(#[from] PhonologyError),
    #[error("reports are not comparable: {0}")]
    MismatchedInputs(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Words sharing one transcription.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomophoneSet {
    pub ipa: String,
    /// Sorted, unique, at least two.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representative {
    /// Lexicographically smallest member.
    #[default]
    Smallest,
    Largest,
}

impl Representative {
    pub fn pick<'a>(&self, set: &'a HomophoneSet) -> &'a str {
        match self {
            Self::Smallest => set.members.first(),
            Self::Largest => set.members.last(),
        }
        .expect("homophone sets are non-empty")
    }
}

#[derive(Debug, Clone, Default)]
pub struct HomophoneSets {
    pub sets: Vec<HomophoneSet>,
    /// Words the backend could not transcribe, with the reason.
    pub unresolved: Vec<(String, String)>,
}

/// Group `words` by exact transcription and keep groups of two or more,
/// ordered by IPA. Only an unavailable backend is fatal.
pub fn build_homophone_sets<S: AsRef<str>>(words: &[S], backend: &dyn G2pBackend) -> Result<HomophoneSets, EvalError> {
    let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut unresolved = Vec::new();
    for w in words {
        let w = w.as_ref().trim();
        if w.is_empty() {
            continue;
        }
        match backend.transcribe(w) {
            Ok(ipa) => {
                let key = strip_delimiters(&ipa).trim().to_string();
                if key.is_empty() {
                    unresolved.push((w.to_string(), "empty transcription".into()));
                } else {
                    groups.entry(key).or_default().insert(w.to_lowercase());
                }
            }
            Err(e @ PhonologyError::BackendUnavailable(_)) => return Err(e.into()),
            Err(e) => unresolved.push((w.to_string(), e.to_string())),
        }
    }
    let sets = groups
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(ipa, m)| HomophoneSet {
            ipa,
            members: m.into_iter().collect(),
        })
        .collect();
    Ok(HomophoneSets { sets, unresolved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub generation: GenerationParams,
    /// Candidates considered per set, best first.
    pub top: usize,
    pub representative: Representative,
    pub jobs: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            generation: GenerationParams::default(),
            top: 10,
            representative: Representative::Smallest,
            jobs: 1,
        }
    }
}

/// Outcome for one homophone set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetOutcome {
    pub ipa: String,
    pub representative: String,
    /// Candidates considered (after the top cut).
    pub candidates: Vec<String>,
    /// Non-representative members with their 1-based rank, if found.
    pub members: Vec<(String, Option<usize>)>,
    /// Candidates that are wordlist entries outside this set.
    pub quasi_homophones: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub coverage: f64,
    pub found: usize,
    pub total: usize,
    pub candidate_stats: CountStats,
    /// Rank of every found homophone, in set order.
    pub ranks: Vec<usize>,
    pub quasi_homophones: usize,
    pub params: EvalParams,
    pub sets: Vec<SetOutcome>,
}

/// Generate from each set's representative and count the other members
/// among the top candidates. `wordlist` is the reference dictionary for
/// quasi-homophones.
pub fn coverage<T: Scalar, S: AsRef<str>>(
    sets: &[HomophoneSet],
    model: &Model<T>,
    params: &EvalParams,
    wordlist: &[S],
) -> Result<EvalReport, EvalError> {
    let dictionary: BTreeSet<String> = wordlist.iter().map(|w| w.as_ref().trim().to_lowercase()).collect();
    let targets: Vec<Target> = sets
        .iter()
        .map(|s| Target {
            name: params.representative.pick(s).to_string(),
            ipa: s.ipa.clone(),
        })
        .collect();
    let batch = batch_generate(&targets, model, &params.generation, params.jobs)?;
    let mut by_target: HashMap<&str, &[crate::generator::Candidate]> = batch
        .results
        .iter()
        .map(|r| (r.target.as_str(), r.candidates.as_slice()))
        .collect();
    let failures: HashMap<&str, &str> = batch.failures.iter().map(|(t, e)| (t.as_str(), e.as_str())).collect();

    let mut outcomes = Vec::with_capacity(sets.len());
    let (mut found, mut total, mut quasi) = (0, 0, 0);
    let mut ranks = Vec::new();
    let mut counts = Vec::new();
    for (set, target) in sets.iter().zip(&targets) {
        let rep = target.name.as_str();
        let cands: Vec<String> = by_target
            .remove(rep)
            .unwrap_or_default()
            .iter()
            .take(params.top)
            .map(|c| c.surface.clone())
            .collect();
        let error = failures.get(rep).map(|e| e.to_string());
        if error.is_none() {
            counts.push(cands.len());
        }
        let members: Vec<(String, Option<usize>)> = set
            .members
            .iter()
            .filter(|m| m.as_str() != rep)
            .map(|m| (m.clone(), cands.iter().position(|c| c == m).map(|i| i + 1)))
            .collect();
        total += members.len();
        for (_, r) in &members {
            if let Some(r) = r {
                found += 1;
                ranks.push(*r);
            }
        }
        let quasi_homophones: Vec<String> = cands
            .iter()
            .filter(|c| dictionary.contains(*c) && !set.members.contains(c))
            .cloned()
            .collect();
        quasi += quasi_homophones.len();
        outcomes.push(SetOutcome {
            ipa: set.ipa.clone(),
            representative: rep.to_string(),
            candidates: cands,
            members,
            quasi_homophones,
            error,
        });
    }
    Ok(EvalReport {
        coverage: if total == 0 { 0.0 } else { found as f64 / total as f64 },
        found,
        total,
        candidate_stats: CountStats::of(&counts),
        ranks,
        quasi_homophones: quasi,
        params: params.clone(),
        sets: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfRow {
    pub rank: usize,
    pub model_ecdf: f64,
    pub baseline_ecdf: f64,
}

/// ECDF of found-homophone ranks next to the expected ECDF when each
/// candidate list is uniformly shuffled: a homophone in a list of length L
/// lands at rank ≤ n with probability min(n, L)/L. Both are averaged over
/// the same found homophones, so each column ends at 1.
pub fn rank_ecdf(report: &EvalReport) -> Vec<EcdfRow> {
    let mut pairs = Vec::new();
    for s in &report.sets {
        for (_, r) in &s.members {
            if let Some(r) = r {
                pairs.push((*r, s.candidates.len()));
            }
        }
    }
    let max_rank = pairs.iter().map(|&(_, l)| l).max().unwrap_or(0);
    let n = pairs.len() as f64;
    (1..=max_rank)
        .map(|rank| {
            let model = pairs.iter().filter(|&&(r, _)| r <= rank).count() as f64 / n;
            let baseline = pairs.iter().map(|&(_, l)| rank.min(l) as f64 / l as f64).sum::<f64>() / n;
            EcdfRow {
                rank,
                model_ecdf: model,
                baseline_ecdf: baseline,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDiff {
    pub ipa: String,
    pub representative: String,
    pub only_with: Vec<String>,
    pub only_without: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub found_with: usize,
    pub found_without: usize,
    /// `found_with − found_without`.
    pub found_delta: i64,
    pub quasi_with: usize,
    pub quasi_without: usize,
    pub quasi_delta: i64,
    /// Sets whose found members differ.
    pub diffs: Vec<SetDiff>,
}

/// Compare two reports built over the same sets and parameters.
pub fn ablation_compare(with: &EvalReport, without: &EvalReport) -> Result<AblationReport, EvalError> {
    if with.params != without.params {
        return Err(EvalError::MismatchedInputs("generation parameters differ".into()));
    }
    let key = |r: &EvalReport| -> Vec<(String, String)> {
        r.sets
            .iter()
            .map(|s| (s.ipa.clone(), s.representative.clone()))
            .collect()
    };
    if key(with) != key(without) || with.total != without.total {
        return Err(EvalError::MismatchedInputs("homophone sets differ".into()));
    }
    let found = |s: &SetOutcome| -> BTreeSet<String> {
        s.members
            .iter()
            .filter(|(_, r)| r.is_some())
            .map(|(m, _)| m.clone())
            .collect()
    };
    let diffs = with
        .sets
        .iter()
        .zip(&without.sets)
        .filter_map(|(a, b)| {
            let (fa, fb) = (found(a), found(b));
            (fa != fb).then(|| SetDiff {
                ipa: a.ipa.clone(),
                representative: a.representative.clone(),
                only_with: fa.difference(&fb).cloned().collect(),
                only_without: fb.difference(&fa).cloned().collect(),
            })
        })
        .collect();
    Ok(AblationReport {
        found_with: with.found,
        found_without: without.found,
        found_delta: with.found as i64 - without.found as i64,
        quasi_with: with.quasi_homophones,
        quasi_without: without.quasi_homophones,
        quasi_delta: with.quasi_homophones as i64 - without.quasi_homophones as i64,
        diffs,
    })
}

pub fn write_report_json<W: Write, R: Serialize>(out: W, report: &R) -> Result<(), EvalError> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

/// CSV with columns `rank,model_ecdf,baseline_ecdf`.
pub fn write_ecdf_csv<W: Write>(out: W, rows: &[EcdfRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
