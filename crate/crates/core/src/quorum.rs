//! k-anonymity test for URL-borne values.
//!
//! A value is *safe* once at least `k` distinct observers have reported it;
//! values seen by fewer observers are treated as user identifiers. The store
//! only ever holds truncated-MD5 digests of values and observer ids.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::ParsedUrl;
use crate::hash::hash_truncated;

/// Key given to bare tokens with no `=`.
pub const BARE_KEY: &str = "_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumConfig {
    /// Distinct-observer threshold; safe iff cardinality >= k.
    pub k: u32,
    pub min_value_length: usize,
    pub window_days: u32,
}

impl Default for QuorumConfig {
    fn default() -> Self {
        // k = 5 is an operational default, not a measured value.
        Self {
            k: 5,
            min_value_length: 2,
            window_days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuorumError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(u32),
    #[error("min_value_length must be at least 1")]
    ZeroMinLength,
}

impl QuorumConfig {
    pub fn validate(&self) -> Result<(), QuorumError> {
        if self.k < 2 {
            return Err(QuorumError::KTooSmall(self.k));
        }
        if self.min_value_length == 0 {
            return Err(QuorumError::ZeroMinLength);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Entry {
    /// Cardinality carried over from an imported store.
    base: u64,
    observers: BTreeSet<String>,
}

impl Entry {
    fn cardinality(&self) -> u64 {
        self.base + self.observers.len() as u64
    }
}

#[derive(Debug, Clone)]
pub struct QuorumStore {
    config: QuorumConfig,
    window: u64,
    counts: BTreeMap<(String, String), Entry>,
}

/// Splits query and parameter strings into `(key, value)` pairs, dropping
/// values shorter than `min_value_length` characters.
pub fn extract_tokens(url: &ParsedUrl, min_value_length: usize) -> Vec<(String, String)> {
    let params = url.parameter_string.split([';', '&']);
    let query = url.query.split('&');
    params
        .chain(query)
        .filter(|piece| !piece.is_empty())
        .map(|piece| match piece.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (BARE_KEY.to_string(), piece.to_string()),
        })
        .filter(|(_, v)| v.chars().count() >= min_value_length)
        .collect()
}

impl QuorumStore {
    pub fn new(config: QuorumConfig) -> Self {
        Self {
            config,
            window: 0,
            counts: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &QuorumConfig {
        &self.config
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// Starts a new window. Cardinalities only reset here.
    pub fn roll_window(&mut self) {
        self.window += 1;
        self.counts.clear();
    }

    pub fn extract_tokens(&self, url: &ParsedUrl) -> Vec<(String, String)> {
        extract_tokens(url, self.config.min_value_length)
    }

    /// Records that `observer` saw `value` under `key`. Repeat reports from
    /// the same observer do not raise the count.
    pub fn observe(&mut self, key: &str, value: &str, observer: &str) {
        self.counts
            .entry((key.to_string(), hash_truncated(value)))
            .or_default()
            .observers
            .insert(hash_truncated(observer));
    }

    /// Seeds an entry from a persisted `(key, digest, cardinality)` row.
    pub fn import(&mut self, key: &str, value_digest: &str, cardinality: u64) {
        let entry = self
            .counts
            .entry((key.to_string(), value_digest.to_string()))
            .or_default();
        entry.base = entry.base.max(cardinality);
    }

    pub fn cardinality(&self, key: &str, value: &str) -> u64 {
        self.counts
            .get(&(key.to_string(), hash_truncated(value)))
            .map_or(0, Entry::cardinality)
    }

    pub fn is_safe(&self, key: &str, value: &str) -> bool {
        self.cardinality(key, value) >= u64::from(self.config.k)
    }

    /// True iff any token in the URL is unsafe.
    pub fn classify_request(&self, url: &ParsedUrl) -> bool {
        self.extract_tokens(url)
            .iter()
            .any(|(k, v)| !self.is_safe(k, v))
    }

    /// `(key, value digest, cardinality)` rows in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.counts
            .iter()
            .map(|((k, d), e)| (k.as_str(), d.as_str(), e.cardinality()))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}
