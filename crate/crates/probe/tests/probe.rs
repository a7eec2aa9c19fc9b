mod common;

use std::time::Duration;

use proptest::prelude::*;
use soundsquat_probe::cache::ProbeCache;
use soundsquat_probe::classify::{classify, Classification, ClassifyInput, ProviderVerdict};
use soundsquat_probe::clock::{Clock, SimClock};
use soundsquat_probe::dns::{probe_dns, FixtureResolver};
use soundsquat_probe::fqdn::{build_fqdns, validate_label, DEFAULT_TLDS};
use soundsquat_probe::registry::{probe_package, FixtureRegistry};
use soundsquat_probe::reputation::{FixtureProvider, ReputationProvider, Verdict};
use soundsquat_probe::retry::RetryPolicy;
use soundsquat_probe::store::{read_records, ResultStore};
use soundsquat_probe::whois::{is_privacy_owner, normalize_owner, registrant_org, same_owner};
use soundsquat_probe::{extract_sld, Mode, ProbeConfig, ProbeError, PublicSuffixList};

fn fixtures(kind: &str) -> std::path::PathBuf {
    common::universe().join(kind)
}

#[test]
fn sld_extraction_uses_the_longest_suffix() {
    let psl = PublicSuffixList::bundled();
    let t = extract_sld("example.co.uk", &psl).unwrap();
    assert_eq!((t.sld.as_str(), t.registrable.as_str()), ("example", "example.co.uk"));
    assert_eq!(extract_sld("microsoft.com", &psl).unwrap().sld, "microsoft");
    assert_eq!(
        extract_sld("WWW.Microsoft.COM.", &psl).unwrap().registrable,
        "microsoft.com"
    );
    assert!(matches!(
        extract_sld("co.uk", &psl),
        Err(ProbeError::NoRegistrableLabel(_))
    ));
    assert!(matches!(
        extract_sld("com", &psl),
        Err(ProbeError::NoRegistrableLabel(_))
    ));
    assert!(matches!(
        extract_sld("exa mple.com", &psl),
        Err(ProbeError::InvalidDomain(..))
    ));
    // Unlisted TLDs fall back to the implicit "*" rule.
    assert_eq!(extract_sld("a.b.example", &psl).unwrap().sld, "b");
}

#[test]
fn wildcard_and_exception_rules() {
    let psl = PublicSuffixList::parse("// comment\n*.ck\n!www.ck\nuk\nco.uk\n");
    assert_eq!(psl.len(), 4);
    assert_eq!(extract_sld("shop.gov.ck", &psl).unwrap().sld, "shop");
    assert!(matches!(
        extract_sld("gov.ck", &psl),
        Err(ProbeError::NoRegistrableLabel(_))
    ));
    assert_eq!(extract_sld("www.ck", &psl).unwrap().sld, "www");
    assert_eq!(psl.suffix_of("a.b.co.uk"), "co.uk");
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("cand{i}")).collect()
}

#[test]
fn fqdn_count_is_the_full_cross_product() {
    // 164 targets holding 3,681 candidates in total, against the ten default TLDs.
    let mut per_target = Vec::new();
    let mut left = 3681usize;
    for t in 0..164 {
        let n = if t < 163 { 22 } else { left };
        per_target.push((
            format!("target{t}"),
            labels(n).iter().map(|l| format!("{l}t{t}")).collect::<Vec<_>>(),
        ));
        left -= n;
    }
    assert_eq!(per_target.iter().map(|(_, c)| c.len()).sum::<usize>(), 3681);
    let out = build_fqdns(&per_target, &DEFAULT_TLDS).unwrap();
    assert_eq!(out.domains.len(), 36_810);
    assert!(out.invalid.is_empty());

    let one = build_fqdns(&[("x".to_string(), vec!["abc"])], &["com"]).unwrap();
    assert_eq!(one.domains.len(), 1);
    assert_eq!(one.domains[0].fqdn, "abc.com");
}

#[test]
fn invalid_labels_are_reported_and_skipped() {
    let long = "a".repeat(64);
    let cands = vec![(
        "t".to_string(),
        vec!["-bad-", "ok-label", "o'neil", "snake_case", "", long.as_str(), "Good"],
    )];
    let out = build_fqdns(&cands, &["com", "net"]).unwrap();
    let names: Vec<&str> = out.domains.iter().map(|d| d.fqdn.as_str()).collect();
    assert_eq!(names, ["ok-label.com", "ok-label.net", "good.com", "good.net"]);
    assert_eq!(out.invalid.len(), 5);
    assert!(validate_label(&"a".repeat(63)).is_ok());
    assert!(matches!(
        build_fqdns::<&str, &str>(&cands, &[]),
        Err(ProbeError::NoTlds)
    ));
}

proptest! {
    #[test]
    fn valid_labels_cross_every_tld(
        cands in prop::collection::vec(("[a-z]{2}", prop::collection::vec("[a-z0-9]([a-z0-9-]{0,10}[a-z0-9])?", 0..6)), 0..6),
        ntld in 1usize..=10,
    ) {
        let tlds = &DEFAULT_TLDS[..ntld];
        let out = build_fqdns(&cands, tlds).unwrap();
        let total: usize = cands.iter().map(|(_, c)| c.len()).sum();
        prop_assert_eq!(out.domains.len(), total * ntld);
        prop_assert!(out.invalid.is_empty());
        for d in &out.domains {
            prop_assert_eq!(&d.fqdn, &format!("{}.{}", d.label, d.tld));
        }
    }
}

#[test]
fn dns_fixture_verdicts() {
    let r = FixtureResolver::new(fixtures("dns"));
    let clock = SimClock::new();
    let retry = RetryPolicy::default();
    let nx = probe_dns("mikrosoft.ru", &r, &retry, &clock).unwrap();
    assert!(!nx.exists);
    let missing = probe_dns("never-recorded.com", &r, &retry, &clock).unwrap();
    assert!(!missing.exists);
    let a = probe_dns("telegramm.com", &r, &retry, &clock).unwrap();
    assert!(a.exists);
    assert_eq!(a.records, ["A 192.0.2.30"]);
    assert_eq!(clock.now(), Duration::ZERO);
}

#[test]
fn dns_retries_through_timeouts_with_backoff() {
    let r = FixtureResolver::new(fixtures("dns"));
    let clock = SimClock::new();
    let p = probe_dns("netflics.ru", &r, &RetryPolicy::default(), &clock).unwrap();
    assert!(p.exists);
    assert_eq!(p.attempts, 3);
    // 500 ms, then 1000 ms.
    assert_eq!(clock.now(), Duration::from_millis(1500));

    let r = FixtureResolver::new(fixtures("dns"));
    let err = probe_dns("netflics.ru", &r, &RetryPolicy::none(), &SimClock::new()).unwrap_err();
    assert!(matches!(err, ProbeError::ResolverTimeout(_)));

    let err = probe_dns("pornhubb.ru", &r, &RetryPolicy::default(), &SimClock::new()).unwrap_err();
    assert!(matches!(err, ProbeError::ResolverError(..)));
}

#[test]
fn registry_fixture_statuses() {
    let reg = FixtureRegistry::new(fixtures("registry"));
    let clock = SimClock::new();
    let retry = RetryPolicy::default();
    let p = probe_package("flasque", &reg, &retry, &clock).unwrap();
    assert!(p.exists);
    assert_eq!(p.metadata.unwrap().stars, Some(0));
    assert!(!probe_package("flassk", &reg, &retry, &clock).unwrap().exists);

    let err = probe_package("pandaz", &reg, &retry, &clock).unwrap_err();
    assert!(matches!(err, ProbeError::RegistryUnavailable(..)));
    assert_eq!(clock.now(), Duration::from_millis(1500));

    let later = probe_package("quandle", &reg, &retry, &clock).unwrap();
    assert!(later.exists);
    assert_eq!(later.attempts, 3);

    let c2 = SimClock::new();
    let err = probe_package("phlask", &reg, &retry, &c2).unwrap_err();
    assert!(matches!(err, ProbeError::MalformedMetadata(..)));
    assert_eq!(c2.now(), Duration::ZERO, "malformed metadata is not retried");
}

#[test]
fn provider_failures_are_errors_not_clean() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("slow.example.status"), "TIMEOUT\n").unwrap();
    std::fs::write(dir.path().join("bad.example.status"), "MALICIOUS\n").unwrap();
    let p = FixtureProvider::new("stub", dir.path());
    assert!(matches!(p.query("slow.example"), Err(ProbeError::Provider { .. })));
    assert_eq!(p.query("bad.example").unwrap(), Verdict::Malicious);
    assert_eq!(p.query("unknown.example").unwrap(), Verdict::Absent);
}

#[test]
fn owner_normalization() {
    assert_eq!(normalize_owner("Netflix, Inc."), "netflix");
    assert_eq!(normalize_owner("Microsoft Corporation"), "microsoft");
    assert!(same_owner("TripAdvisor LLC", "Tripadvisor, L.L.C."));
    assert!(same_owner("Meta Platforms, Inc.", "META PLATFORMS INC"));
    assert!(same_owner("LLC Wildberries", "Wildberries, LLC"));
    assert!(!same_owner("Microsoft Corporation", "Netflix, Inc."));
    for proxy in [
        "Domains By Proxy, LLC",
        "Whois Privacy",
        "Private Person",
        "REDACTED FOR PRIVACY",
    ] {
        assert!(is_privacy_owner(proxy), "{proxy}");
        assert!(!same_owner(proxy, proxy), "{proxy} must never establish ownership");
    }
    assert_eq!(
        registrant_org("Domain: x.ru\norg:   YANDEX, LLC.\n").as_deref(),
        Some("YANDEX, LLC.")
    );
    assert_eq!(
        registrant_org("Registrant Organization:\nRegistrant: Someone\n").as_deref(),
        Some("Someone")
    );
}

fn whois(org: &str) -> String {
    format!("Domain Name: X\nRegistrant Organization: {org}\n")
}

#[test]
fn classification_examples() {
    let v = |p: &str, verdict| ProviderVerdict {
        provider: p.into(),
        verdict,
    };
    let owner = whois("Microsoft Corporation");
    let (c, ev) = classify(&ClassifyInput {
        exists: true,
        verdicts: &[v("gsb", Verdict::Absent)],
        target_whois: Some(&owner),
        candidate_whois: Some(&owner),
    });
    assert_eq!(c, Classification::TargetOwned);
    assert_eq!(ev.candidate_owner.as_deref(), Some("Microsoft Corporation"));

    let (c, ev) = classify(&ClassifyInput {
        exists: true,
        verdicts: &[v("gsb", Verdict::Clean), v("vt", Verdict::Malicious)],
        target_whois: Some(&owner),
        candidate_whois: Some(&owner),
    });
    assert_eq!(c, Classification::Malicious);
    assert_eq!(ev.verdicts[1].provider, "vt");

    let (c, ev) = classify(&ClassifyInput {
        exists: true,
        verdicts: &[],
        target_whois: Some(&owner),
        candidate_whois: None,
    });
    assert_eq!(c, Classification::Unknown);
    assert!(ev.notes[0].contains("skipped"));

    let (c, ev) = classify(&ClassifyInput {
        exists: false,
        verdicts: &[v("gsb", Verdict::Malicious)],
        ..Default::default()
    });
    assert_eq!(c, Classification::NotFound);
    assert!(ev.verdicts.is_empty());
}

/// The decision order written out independently of `classify`.
fn oracle(exists: bool, verdicts: &[Verdict], owners: Option<(&str, &str)>) -> Classification {
    if !exists {
        return Classification::NotFound;
    }
    if verdicts.contains(&Verdict::Malicious) {
        return Classification::Malicious;
    }
    if verdicts.contains(&Verdict::Suspicious) {
        return Classification::Suspicious;
    }
    match owners {
        Some((t, c)) if !is_privacy_owner(t) && !is_privacy_owner(c) && normalize_owner(t) == normalize_owner(c) => {
            Classification::TargetOwned
        }
        _ => Classification::Unknown,
    }
}

#[test]
fn classification_over_every_verdict_combination() {
    let all = [Verdict::Malicious, Verdict::Suspicious, Verdict::Clean, Verdict::Absent];
    let owner_cases: [Option<(&str, &str)>; 5] = [
        Some(("Netflix, Inc.", "NETFLIX INC")),
        Some(("Netflix, Inc.", "Hulu, LLC")),
        Some(("Domains By Proxy, LLC", "Domains By Proxy, LLC")),
        Some(("Private Person", "Private Person")),
        None,
    ];
    let mut seen = std::collections::BTreeSet::new();
    for exists in [false, true] {
        for a in all {
            for b in all {
                for owners in owner_cases {
                    let verdicts = [a, b];
                    let pv: Vec<ProviderVerdict> = verdicts
                        .iter()
                        .enumerate()
                        .map(|(i, &verdict)| ProviderVerdict {
                            provider: format!("p{i}"),
                            verdict,
                        })
                        .collect();
                    let tw = owners.map(|(t, _)| whois(t));
                    let cw = owners.map(|(_, c)| whois(c));
                    let input = ClassifyInput {
                        exists,
                        verdicts: &pv,
                        target_whois: tw.as_deref(),
                        candidate_whois: cw.as_deref(),
                    };
                    let got = classify(&input);
                    assert_eq!(
                        got.0,
                        oracle(exists, &verdicts, owners),
                        "{exists} {verdicts:?} {owners:?}"
                    );
                    assert_eq!(classify(&input), got, "classification must be pure");
                    if got.0 != Classification::NotFound {
                        assert!(exists);
                        assert_eq!(got.1.verdicts, pv);
                    }
                    seen.insert(got.0);
                }
            }
        }
    }
    assert_eq!(seen.len(), 5, "every class is reachable");
}

#[test]
fn cache_respects_ttl_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let ttl = Duration::from_secs(60);
    let c = ProbeCache::open(dir.path(), ttl).unwrap();
    c.put("dns:a.com", &true, Duration::from_secs(100)).unwrap();
    assert_eq!(c.get::<bool>("dns:a.com", Duration::from_secs(159)), Some(true));
    assert_eq!(c.get::<bool>("dns:a.com", Duration::from_secs(160)), None);
    assert_eq!(c.get::<bool>("dns:b.com", Duration::from_secs(100)), None);
    drop(c);
    let reopened = ProbeCache::open(dir.path(), ttl).unwrap();
    assert_eq!(reopened.len(), 1);
    assert_eq!(reopened.get::<bool>("dns:a.com", Duration::from_secs(120)), Some(true));
}

#[test]
fn services_never_reprobe_within_ttl() {
    let mut cfg = common::config();
    cfg.cache_ttl_secs = 10;
    let clock = SimClock::new();
    let s = soundsquat_probe::Services::from_config(&cfg, std::sync::Arc::new(clock.clone())).unwrap();
    // netflics.ru times out twice before answering; a cached answer hides that.
    let first = s.dns("netflics.ru").unwrap();
    assert_eq!(first.attempts, 3);
    let t = clock.now();
    assert_eq!(s.dns("netflics.ru").unwrap(), first);
    assert_eq!(clock.now(), t, "cache hits neither wait nor retry");
    clock.advance(Duration::from_secs(10));
    let again = s.dns("netflics.ru").unwrap();
    assert_eq!(again.attempts, 1, "expired entry is probed afresh");
}

#[test]
fn config_parsing() {
    let cfg = ProbeConfig::from_toml_str("fixtures_dir = \"/tmp\"\n").unwrap();
    assert_eq!(cfg.tlds.len(), 10);
    assert_eq!((cfg.retries, cfg.backoff_ms, cfg.concurrency), (2, 500, 8));
    assert_eq!(cfg.registry_url, "https://pypi.org/pypi/{name}/json");
    assert!(matches!(
        ProbeConfig::from_toml_str("fixtures_dir = \"/tmp\"\nbogus = 1\n"),
        Err(ProbeError::Config(_))
    ));
    assert!(ProbeConfig::from_toml_str("mode = \"fixture\"\n").is_err());
    assert!(ProbeConfig::from_toml_str("mode = \"live\"\nproviders = [\"gsb\"]\n").is_err());
    assert!(ProbeConfig::from_toml_str("fixtures_dir = \"/tmp\"\ntlds = []\n").is_err());
    assert!(ProbeConfig::from_toml_str("fixtures_dir = \"/tmp\"\nrate_per_second = 0\n").is_err());
    let live = ProbeConfig::from_toml_str("mode = \"live\"\n").unwrap();
    assert_eq!(live.mode, Mode::Live);

    let loaded = common::config();
    assert_eq!(loaded.fixtures_dir.unwrap(), common::universe().join("."));
}

#[test]
fn store_round_trip_and_schema_check() {
    let dir = tempfile::tempdir().unwrap();
    let (c, evidence) = classify(&ClassifyInput::default());
    let rec = soundsquat_probe::ProbeRecord {
        schema: soundsquat_probe::classify::SCHEMA_VERSION,
        kind: soundsquat_probe::classify::RecordKind::Domain,
        name: "a.com".into(),
        target: "b.com".into(),
        exists: false,
        classification: c,
        evidence,
        timestamp: Some(7),
    };
    let mut store = ResultStore::create(dir.path()).unwrap();
    store.append(&rec).unwrap();
    store.append(&rec).unwrap();
    let index = store.finish(&"summary").unwrap();
    assert_eq!(index.lines["a.com"], [1, 2]);
    assert_eq!(read_records(dir.path()).unwrap(), [rec.clone(), rec.clone()]);

    let path = dir.path().join(soundsquat_probe::store::RECORDS_FILE);
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replacen("\"schema\":1", "\"schema\":9", 1);
    std::fs::write(&path, text).unwrap();
    assert!(matches!(
        read_records(dir.path()),
        Err(ProbeError::UnsupportedSchema(_, 9))
    ));
}
