//! Allocation-only core of the trackscope measurement pipeline.
//!
//! The crate turns browser request events into per-page-load tracking
//! records, strips them of first-party identity, models the unlinkable
//! proxy transport used to collect them, attributes third-party hostnames
//! to trackers and companies, and aggregates the resulting corpus into
//! monthly reports.
//!
//! Everything here is pure computation over in-memory values; file formats,
//! IO, the synthetic corpus generator and the command line live in the
//! `trackscope` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod domain;
pub mod geo;
pub mod hash;
pub mod probe;
pub mod quorum;
pub mod sanitize;
pub mod time;
pub mod trackerdb;
pub mod transport;

pub use aggregate::{AggregateError, AggregateReport, Partial};
pub use domain::{
    first_level_path, is_third_party, parse_url, registrable_domain, truncate_tld2, DomainError,
    ParsedUrl, RegistrableDomain, Scheme, SuffixList,
};
pub use geo::{GeoError, GeoTable};
pub use hash::hash_truncated;
pub use probe::{PageLoad, PageLoadRecord, Probe, ProbeError, RequestEvent, ThirdPartyStats};
pub use quorum::{QuorumConfig, QuorumStore};
pub use sanitize::{CleaningRule, SanitizedPageLoad, Sanitizer};
pub use time::MonthKey;
pub use trackerdb::{Category, DbError, TrackerDb, TrackerDbEntry};
