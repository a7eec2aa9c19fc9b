//! Domain and package pipelines: generate → expand → probe → classify →
//! persist.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use soundsquat_core::generator::{generate, CandidateRecord, CountStats, GenerationParams};
use soundsquat_core::model::Model;
use soundsquat_core::phonology::{to_ipa, tokenize_ipa, G2pBackend, PhonemeMap};
use soundsquat_core::Scalar;

use crate::classify::SCHEMA_VERSION;
use crate::classify::{classify, Classification, ClassifyInput, Evidence, ProbeRecord, ProviderVerdict, RecordKind};
use crate::clock::Clock;
use crate::config::{ProbeConfig, Services};
use crate::dns::{probe_dns, DnsProbe, Lookup, Resolver};
use crate::error::ProbeError;
use crate::fqdn::{build_fqdns, CandidateDomain, InvalidLabel};
use crate::psl::{extract_sld, PublicSuffixList};
use crate::ratelimit::TokenBucket;
use crate::registry::{probe_package, HttpResponse, PackageProbe, RegistryTransport};
use crate::reputation::Verdict;
use crate::store::ResultStore;

/// Produces candidate names for a target name.
pub trait CandidateSource: Sync {
    fn candidates(&self, name: &str) -> Result<Vec<String>, ProbeError>;
}

/// Precomputed candidates, e.g. the output of an earlier `generate` run.
#[derive(Debug, Clone, Default)]
pub struct StaticCandidates {
    map: BTreeMap<String, Vec<String>>,
}

impl StaticCandidates {
    pub fn insert(&mut self, target: &str, candidate: &str) {
        let list = self.map.entry(target.to_string()).or_default();
        if !list.iter().any(|c| c == candidate) {
            list.push(candidate.to_string());
        }
    }

    /// `target<TAB>candidate` lines; `#` starts a comment.
    pub fn parse_tsv(text: &str) -> Result<Self, ProbeError> {
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (t, c) = line.split_once('\t').ok_or_else(|| {
                ProbeError::Config(format!("candidate line {}: expected target<TAB>candidate", i + 1))
            })?;
            out.insert(t.trim(), c.trim());
        }
        Ok(out)
    }

    /// Candidate records as written by the generator's JSONL output.
    pub fn parse_jsonl(text: &str) -> Result<Self, ProbeError> {
        let mut out = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: CandidateRecord = serde_json::from_str(line)?;
            out.insert(&r.target, &r.candidate);
        }
        Ok(out)
    }
}

impl CandidateSource for StaticCandidates {
    fn candidates(&self, name: &str) -> Result<Vec<String>, ProbeError> {
        Ok(self.map.get(name).cloned().unwrap_or_default())
    }
}

/// Candidates from a trained model: transcribe, optionally map foreign
/// phonemes, run beam search and keep up to `top` surfaces.
pub struct ModelCandidates<'a, T: Scalar> {
    pub model: &'a Model<T>,
    pub backend: &'a dyn G2pBackend,
    pub language: String,
    pub map: Option<&'a PhonemeMap>,
    pub params: GenerationParams,
    pub top: Option<usize>,
}

impl<T: Scalar> CandidateSource for ModelCandidates<'_, T> {
    fn candidates(&self, name: &str) -> Result<Vec<String>, ProbeError> {
        let fail = |e: &dyn std::fmt::Display| ProbeError::Generation(name.to_string(), e.to_string());
        let ipa = to_ipa(name, self.backend, &self.language).map_err(|e| fail(&e))?;
        let seq = match self.map {
            Some(m) => m.map_surface(&ipa),
            None => tokenize_ipa(&ipa, &self.model.phonemes),
        }
        .map_err(|e| fail(&e))?;
        let mut params = self.params.clone();
        params.exclude.insert(name.to_string());
        let mut out: Vec<String> = generate(&seq, self.model, &params)
            .map_err(|e| fail(&e))?
            .into_iter()
            .map(|c| c.surface)
            .collect();
        if let Some(n) = self.top {
            out.truncate(n);
        }
        Ok(out)
    }
}

/// Run-level options taken from the configuration.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub tlds: Vec<String>,
    pub jobs: usize,
    pub normalize_timestamps: bool,
    pub max_package_len: usize,
    pub suffixes: PublicSuffixList,
}

impl PipelineOptions {
    pub fn from_config(cfg: &ProbeConfig) -> Result<Self, ProbeError> {
        cfg.validate()?;
        Ok(Self {
            tlds: cfg.tlds.clone(),
            jobs: cfg.concurrency,
            normalize_timestamps: cfg.normalize_timestamps,
            max_package_len: cfg.max_package_len,
            suffixes: cfg.suffix_list()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameError {
    pub name: String,
    pub error: String,
}

impl NameError {
    fn new(name: &str, e: &ProbeError) -> Self {
        Self {
            name: name.to_string(),
            error: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub not_found: usize,
    pub target_owned: usize,
    pub malicious: usize,
    pub suspicious: usize,
    pub unknown: usize,
}

impl ClassCounts {
    pub fn add(&mut self, c: Classification) {
        match c {
            Classification::NotFound => self.not_found += 1,
            Classification::TargetOwned => self.target_owned += 1,
            Classification::Malicious => self.malicious += 1,
            Classification::Suspicious => self.suspicious += 1,
            Classification::Unknown => self.unknown += 1,
        }
    }

    pub fn get(&self, c: Classification) -> usize {
        match c {
            Classification::NotFound => self.not_found,
            Classification::TargetOwned => self.target_owned,
            Classification::Malicious => self.malicious,
            Classification::Suspicious => self.suspicious,
            Classification::Unknown => self.unknown,
        }
    }
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub initial_domains: usize,
    pub invalid_targets: Vec<NameError>,
    pub unique_slds: usize,
    /// Generated candidates per unique SLD.
    pub candidates: CountStats,
    pub invalid_labels: Vec<InvalidLabel>,
    pub candidate_domains: usize,
    pub existing: usize,
    /// Existing candidates as a percentage of candidate domains.
    pub existing_pct: f64,
    pub classes: ClassCounts,
    /// Names whose probes failed after retries; they have no record.
    pub failures: Vec<NameError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageSummary {
    pub packages: usize,
    /// Packages dropped for exceeding the length limit.
    pub skipped_long: usize,
    pub considered: usize,
    pub candidates: CountStats,
    pub invalid_names: Vec<NameError>,
    pub existing: usize,
    /// Existing candidates as a percentage of all generated candidates.
    pub existing_pct: f64,
    pub packages_with_existing: usize,
    /// Percentage of considered packages with at least one existing candidate.
    pub packages_with_existing_pct: f64,
    pub zero_star_zero_fork: usize,
    pub failures: Vec<NameError>,
}

/// Apply `f` to every item on up to `jobs` threads, keeping input order.
pub fn parallel_map<I: Sync, R: Send>(items: &[I], jobs: usize, f: impl Fn(&I) -> R + Sync) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Wraps a transport so that every request first takes a rate-limit token.
struct Limited<'a, X: ?Sized> {
    inner: &'a X,
    bucket: &'a TokenBucket,
    clock: &'a dyn Clock,
}

impl<X: Resolver + ?Sized> Resolver for Limited<'_, X> {
    fn lookup(&self, fqdn: &str) -> Result<Lookup, ProbeError> {
        self.bucket.acquire(self.clock);
        self.inner.lookup(fqdn)
    }
}

impl<X: RegistryTransport + ?Sized> RegistryTransport for Limited<'_, X> {
    fn get(&self, name: &str) -> Result<HttpResponse, ProbeError> {
        self.bucket.acquire(self.clock);
        self.inner.get(name)
    }
}

impl Services {
    fn limited<'a, X: ?Sized>(&'a self, inner: &'a X) -> Limited<'a, X> {
        Limited {
            inner,
            bucket: &self.limiter,
            clock: &*self.clock,
        }
    }

    fn cached<T: Serialize + DeserializeOwned>(
        &self,
        key: &str,
        probe: impl FnOnce() -> Result<T, ProbeError>,
    ) -> Result<T, ProbeError> {
        if let Some(v) = self.cache.get(key, self.clock.now()) {
            log::debug!("cache hit {key}");
            return Ok(v);
        }
        let v = probe()?;
        self.cache.put(key, &v, self.clock.now())?;
        Ok(v)
    }

    /// DNS existence check, cached and rate-limited.
    pub fn dns(&self, fqdn: &str) -> Result<DnsProbe, ProbeError> {
        self.cached(&format!("dns:{fqdn}"), || {
            let p = probe_dns(fqdn, &self.limited(&*self.resolver), &self.retry, &*self.clock)?;
            if p.attempts > 1 {
                log::info!("dns {fqdn}: answered after {} attempts", p.attempts);
            }
            Ok(p)
        })
    }

    /// Whois text, cached and rate-limited. `None` means no record.
    pub fn whois_text(&self, domain: &str) -> Result<Option<String>, ProbeError> {
        self.cached(&format!("whois:{domain}"), || {
            let what = format!("whois {domain}");
            let (text, _) = self.retry.run(&*self.clock, &what, || {
                self.limiter.acquire(&*self.clock);
                self.whois.lookup(domain)
            })?;
            Ok(text)
        })
    }

    /// Every provider's verdict, in configuration order.
    pub fn verdicts(&self, fqdn: &str) -> Result<Vec<ProviderVerdict>, ProbeError> {
        self.providers
            .iter()
            .map(|p| {
                let verdict: Verdict = self.cached(&format!("rep:{}:{fqdn}", p.name()), || {
                    let what = format!("{} {fqdn}", p.name());
                    let (v, _) = self.retry.run(&*self.clock, &what, || {
                        self.limiter.acquire(&*self.clock);
                        p.query(fqdn)
                    })?;
                    Ok(v)
                })?;
                Ok(ProviderVerdict {
                    provider: p.name().to_string(),
                    verdict,
                })
            })
            .collect()
    }

    /// Registry existence check, cached and rate-limited.
    pub fn package(&self, name: &str) -> Result<PackageProbe, ProbeError> {
        self.cached(&format!("pkg:{name}"), || {
            probe_package(name, &self.limited(&*self.registry), &self.retry, &*self.clock)
        })
    }

    fn timestamp(&self, opts: &PipelineOptions) -> Option<u64> {
        (!opts.normalize_timestamps).then(|| self.clock.now().as_secs())
    }
}

/// Probe one candidate domain and classify it. `target_whois` is the
/// target's whois text, fetched once per target.
pub fn probe_domain(
    domain: &CandidateDomain,
    target_whois: Option<&str>,
    services: &Services,
    opts: &PipelineOptions,
) -> Result<ProbeRecord, ProbeError> {
    let dns = services.dns(&domain.fqdn)?;
    let mut notes = Vec::new();
    let (verdicts, candidate_whois) = if dns.exists {
        let verdicts = services.verdicts(&domain.fqdn)?;
        let whois = services.whois_text(&domain.fqdn).unwrap_or_else(|e| {
            notes.push(format!("candidate whois failed: {e}"));
            None
        });
        (verdicts, whois)
    } else {
        (Vec::new(), None)
    };
    let (classification, mut evidence) = classify(&ClassifyInput {
        exists: dns.exists,
        verdicts: &verdicts,
        target_whois,
        candidate_whois: candidate_whois.as_deref(),
    });
    evidence.records = dns.records;
    evidence.notes.splice(0..0, notes);
    Ok(ProbeRecord {
        schema: SCHEMA_VERSION,
        kind: RecordKind::Domain,
        name: domain.fqdn.clone(),
        target: domain.target.clone(),
        exists: dns.exists,
        classification,
        evidence,
        timestamp: services.timestamp(opts),
    })
}

/// Target domains → candidate domains → probe records in `store`.
/// Per-name failures are collected in the summary, never fatal.
pub fn run_domain_pipeline(
    targets: &[String],
    source: &dyn CandidateSource,
    services: &Services,
    opts: &PipelineOptions,
    store: &mut ResultStore,
) -> Result<DomainSummary, ProbeError> {
    let mut invalid_targets = Vec::new();
    // Unique SLDs in first-seen order, each with its registrable domain.
    let mut slds: Vec<(String, String)> = Vec::new();
    let mut seen = HashSet::new();
    for t in targets {
        match extract_sld(t, &opts.suffixes) {
            Ok(name) => {
                if seen.insert(name.sld.clone()) {
                    slds.push((name.sld, name.registrable));
                }
            }
            Err(e) => invalid_targets.push(NameError::new(t, &e)),
        }
    }

    let mut failures = Vec::new();
    let generated = parallel_map(&slds, opts.jobs, |(sld, _)| source.candidates(sld));
    let mut per_target = Vec::new();
    let mut counts = Vec::new();
    for ((sld, registrable), result) in slds.iter().zip(generated) {
        match result {
            Ok(c) => {
                counts.push(c.len());
                per_target.push((registrable.clone(), c));
            }
            Err(e) => failures.push(NameError::new(sld, &e)),
        }
    }
    let fqdns = build_fqdns(&per_target, &opts.tlds)?;

    let owners: Vec<(String, Option<String>)> = parallel_map(&per_target, opts.jobs, |(registrable, _)| {
        let text = services.whois_text(registrable).unwrap_or_else(|e| {
            log::warn!("target whois failed for {registrable}: {e}");
            None
        });
        (registrable.clone(), text)
    });
    let owners: BTreeMap<String, Option<String>> = owners.into_iter().collect();

    let results = parallel_map(&fqdns.domains, opts.jobs, |d| {
        let target_whois = owners.get(&d.target).and_then(|o| o.as_deref());
        probe_domain(d, target_whois, services, opts)
    });

    let mut classes = ClassCounts::default();
    let mut existing = 0;
    for (d, r) in fqdns.domains.iter().zip(results) {
        match r {
            Ok(rec) => {
                classes.add(rec.classification);
                existing += usize::from(rec.exists);
                store.append(&rec)?;
            }
            Err(e) => failures.push(NameError::new(&d.fqdn, &e)),
        }
    }
    Ok(DomainSummary {
        initial_domains: targets.len(),
        invalid_targets,
        unique_slds: slds.len(),
        candidates: CountStats::of(&counts),
        invalid_labels: fqdns.invalid,
        candidate_domains: fqdns.domains.len(),
        existing,
        existing_pct: pct(existing, fqdns.domains.len()),
        classes,
        failures,
    })
}

/// Package-name syntax: letters, digits, `.`, `_`, `-`, starting and ending
/// alphanumeric.
pub fn validate_package_name(name: &str) -> Result<(), String> {
    let ok_char = |c: char| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-');
    if name.is_empty() {
        return Err("empty name".into());
    }
    if let Some(c) = name.chars().find(|&c| !ok_char(c)) {
        return Err(format!("character {c:?} is not allowed in a package name"));
    }
    let edge = |c: Option<char>| c.is_some_and(|c| c.is_ascii_alphanumeric());
    if !edge(name.chars().next()) || !edge(name.chars().last()) {
        return Err("name must start and end with a letter or digit".into());
    }
    Ok(())
}

/// Package names → candidates → registry probes → records in `store`.
pub fn run_package_pipeline(
    packages: &[String],
    source: &dyn CandidateSource,
    services: &Services,
    opts: &PipelineOptions,
    store: &mut ResultStore,
) -> Result<PackageSummary, ProbeError> {
    let considered: Vec<String> = packages
        .iter()
        .filter(|p| p.chars().count() <= opts.max_package_len)
        .cloned()
        .collect();
    let skipped_long = packages.len() - considered.len();

    let mut failures = Vec::new();
    let mut invalid_names = Vec::new();
    let mut counts = Vec::new();
    let mut work: Vec<(String, String)> = Vec::new();
    let generated = parallel_map(&considered, opts.jobs, |p| source.candidates(p));
    for (pkg, result) in considered.iter().zip(generated) {
        match result {
            Ok(cands) => {
                counts.push(cands.len());
                for c in cands {
                    let c = c.to_lowercase();
                    match validate_package_name(&c) {
                        Ok(()) => work.push((pkg.clone(), c)),
                        Err(why) => invalid_names.push(NameError { name: c, error: why }),
                    }
                }
            }
            Err(e) => failures.push(NameError::new(pkg, &e)),
        }
    }

    let results = parallel_map(&work, opts.jobs, |(pkg, name)| {
        services.package(name).map(|p| {
            let evidence = Evidence {
                metadata: p.metadata,
                ..Evidence::default()
            };
            ProbeRecord {
                schema: SCHEMA_VERSION,
                kind: RecordKind::Package,
                name: name.clone(),
                target: pkg.clone(),
                exists: p.exists,
                classification: if p.exists {
                    Classification::Unknown
                } else {
                    Classification::NotFound
                },
                evidence,
                timestamp: services.timestamp(opts),
            }
        })
    });

    let mut existing = 0;
    let mut zero = 0;
    let mut with_existing = HashSet::new();
    for ((pkg, name), r) in work.iter().zip(results) {
        match r {
            Ok(rec) => {
                if rec.exists {
                    existing += 1;
                    with_existing.insert(pkg.clone());
                    if rec
                        .evidence
                        .metadata
                        .as_ref()
                        .is_some_and(|m| m.stars == Some(0) && m.forks == Some(0))
                    {
                        zero += 1;
                    }
                }
                store.append(&rec)?;
            }
            Err(e) => failures.push(NameError::new(name, &e)),
        }
    }
    let stats = CountStats::of(&counts);
    Ok(PackageSummary {
        packages: packages.len(),
        skipped_long,
        considered: considered.len(),
        candidates: stats,
        invalid_names,
        existing,
        existing_pct: pct(existing, stats.total),
        packages_with_existing: with_existing.len(),
        packages_with_existing_pct: pct(with_existing.len(), considered.len()),
        zero_star_zero_fork: zero,
        failures,
    })
}
