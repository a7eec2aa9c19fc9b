//! Verification of sound-squatting candidates against the real world:
//! candidate hostnames, DNS existence, whois ownership, reputation
//! providers and package registries, behind swappable transports so that
//! every probe can run from recorded fixtures.

pub mod cache;
pub mod classify;
pub mod clock;
pub mod config;
pub mod dns;
pub mod error;
pub mod fixture;
pub mod fqdn;
pub mod pipeline;
pub mod psl;
pub mod ratelimit;
pub mod registry;
pub mod reputation;
pub mod retry;
pub mod store;
pub mod whois;

pub use classify::{classify, Classification, ClassifyInput, ProbeRecord};
pub use config::{Mode, ProbeConfig, Services};
pub use error::ProbeError;
pub use fqdn::{build_fqdns, CandidateDomain, DEFAULT_TLDS};
pub use pipeline::{run_domain_pipeline, run_package_pipeline, DomainSummary, PackageSummary, PipelineOptions};
pub use psl::{extract_sld, PublicSuffixList, TargetName};
