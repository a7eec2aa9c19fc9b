#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use soundsquat_probe::clock::SimClock;
use soundsquat_probe::pipeline::StaticCandidates;
use soundsquat_probe::store::ResultStore;
use soundsquat_probe::{
    run_domain_pipeline, run_package_pipeline, DomainSummary, PackageSummary, PipelineOptions, ProbeConfig, Services,
};

pub fn universe() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/universe")
}

pub fn config() -> ProbeConfig {
    ProbeConfig::load(universe().join("probe.toml")).unwrap()
}

pub fn services(cfg: &ProbeConfig) -> Services {
    Services::from_config(cfg, Arc::new(SimClock::new())).unwrap()
}

pub fn lines(name: &str) -> Vec<String> {
    std::fs::read_to_string(universe().join(name))
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// `(name, expected class or "failed")` rows.
pub fn expected(name: &str) -> Vec<(String, String)> {
    lines(name)
        .iter()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect()
}

pub fn candidates(name: &str) -> StaticCandidates {
    StaticCandidates::parse_tsv(&std::fs::read_to_string(universe().join(name)).unwrap()).unwrap()
}

pub fn run_domains(cfg: &ProbeConfig, services: &Services, out: &Path) -> DomainSummary {
    let opts = PipelineOptions::from_config(cfg).unwrap();
    let mut store = ResultStore::create(out).unwrap();
    let s = run_domain_pipeline(
        &lines("targets.txt"),
        &candidates("candidates.tsv"),
        services,
        &opts,
        &mut store,
    )
    .unwrap();
    store.finish(&s).unwrap();
    s
}

pub fn run_packages(cfg: &ProbeConfig, services: &Services, out: &Path) -> PackageSummary {
    let opts = PipelineOptions::from_config(cfg).unwrap();
    let mut store = ResultStore::create(out).unwrap();
    let s = run_package_pipeline(
        &lines("packages.txt"),
        &candidates("package_candidates.tsv"),
        services,
        &opts,
        &mut store,
    )
    .unwrap();
    store.finish(&s).unwrap();
    s
}
