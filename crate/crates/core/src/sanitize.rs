//! Client-side privacy treatment applied to page loads before transport.
//!
//! First-party hostname and first-level path are replaced by truncated MD5
//! digests, third-party hostnames are cut to TLD+2 and passed through the
//! cleaning rules, and third parties that collapse onto the same hostname
//! are merged counter-wise.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{first_level_path, registrable_domain, truncate_tld2, SuffixList};
use crate::hash::{hash_truncated_to, DEFAULT_TRUNCATION_BYTES};
use crate::probe::{PageLoadRecord, Protocol, ThirdPartyStats};
use crate::time::MonthKey;

/// Label substituted for identifier-bearing subdomains.
pub const PLACEHOLDER_LABEL: &str = "___";

pub const SANITIZED_SCHEMA_VERSION: &str = "v1-sanitized";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizedPageLoad {
    pub protocol: Protocol,
    pub month: MonthKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_country: Option<String>,
    pub hostname_digest: String,
    pub path_digest: String,
    pub third_parties: Vec<ThirdPartyStats>,
}

impl SanitizedPageLoad {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sanitized page loads always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleaningAction {
    /// Replace everything left of the target domain with one placeholder label.
    ReplaceSubdomain,
}

impl FromStr for CleaningAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "replace" | "replace-subdomain" => Ok(CleaningAction::ReplaceSubdomain),
            other => Err(alloc::format!("unknown cleaning action {other:?}")),
        }
    }
}

impl CleaningAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            CleaningAction::ReplaceSubdomain => "replace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningRule {
    pub target_domain: String,
    pub action: CleaningAction,
}

impl CleaningRule {
    pub fn replace(target_domain: &str) -> Self {
        Self {
            target_domain: target_domain.to_ascii_lowercase(),
            action: CleaningAction::ReplaceSubdomain,
        }
    }

    /// Rewritten hostname when the rule applies; `None` otherwise.
    pub fn apply(&self, hostname: &str) -> Option<String> {
        let prefix = hostname.strip_suffix(self.target_domain.as_str())?;
        let prefix = prefix.strip_suffix('.')?;
        if prefix.is_empty() {
            return None;
        }
        match self.action {
            CleaningAction::ReplaceSubdomain => {
                Some(alloc::format!("{PLACEHOLDER_LABEL}.{}", self.target_domain))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sanitizer {
    truncation_bytes: usize,
    rules: Vec<CleaningRule>,
}

impl Default for Sanitizer {
    fn default() -> Self {
        Self::new(DEFAULT_TRUNCATION_BYTES, Vec::new())
    }
}

impl Sanitizer {
    pub fn new(truncation_bytes: usize, rules: Vec<CleaningRule>) -> Self {
        Self {
            truncation_bytes,
            rules,
        }
    }

    pub fn rules(&self) -> &[CleaningRule] {
        &self.rules
    }

    pub fn digest(&self, value: &str) -> String {
        hash_truncated_to(value, self.truncation_bytes)
    }

    /// TLD+2 truncation followed by the first matching cleaning rule.
    pub fn clean_hostname(&self, hostname: &str, suffixes: &SuffixList) -> String {
        let truncated =
            truncate_tld2(hostname, suffixes).unwrap_or_else(|_| hostname.to_lowercase());
        self.rules
            .iter()
            .find_map(|rule| rule.apply(&truncated))
            .unwrap_or(truncated)
    }

    pub fn sanitize(&self, page: &PageLoadRecord, suffixes: &SuffixList) -> SanitizedPageLoad {
        SanitizedPageLoad {
            protocol: page.protocol,
            month: MonthKey::from_epoch_ms(page.started_at),
            user_country: page.user_country.clone(),
            hostname_digest: self.digest(&page.hostname),
            path_digest: self.digest(&first_level_path(&page.path)),
            third_parties: self.merge_third_parties(&page.third_parties, suffixes),
        }
    }

    pub fn merge_third_parties(
        &self,
        third_parties: &[ThirdPartyStats],
        suffixes: &SuffixList,
    ) -> Vec<ThirdPartyStats> {
        let mut merged: BTreeMap<String, ThirdPartyStats> = BTreeMap::new();
        for tp in third_parties {
            let host = self.clean_hostname(&tp.hostname, suffixes);
            merged
                .entry(host.clone())
                .or_insert_with(|| ThirdPartyStats::new(host))
                .merge(tp);
        }
        merged.into_values().collect()
    }
}

/// A TLD+1 whose subdomains look like per-user identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCandidate {
    pub rule: CleaningRule,
    /// `(window index, distinct TLD+2 subdomains)` for every window at or
    /// above the threshold.
    pub windows: Vec<(i64, usize)>,
}

/// Flags domains whose distinct TLD+2 subdomain count reaches `threshold`
/// in at least two windows of `window_days`. Candidates are for manual
/// review; nothing is applied automatically.
pub fn detect_high_cardinality<'r>(
    corpus: impl IntoIterator<Item = &'r PageLoadRecord>,
    suffixes: &SuffixList,
    threshold: usize,
    window_days: u32,
) -> Vec<RuleCandidate> {
    let window_ms = i64::from(window_days.max(1)) * 86_400_000;
    let mut seen: BTreeMap<String, BTreeMap<i64, BTreeSet<String>>> = BTreeMap::new();
    for page in corpus {
        let window = page.started_at.div_euclid(window_ms);
        for tp in &page.third_parties {
            let (Ok(domain), Ok(tld2)) = (
                registrable_domain(&tp.hostname, suffixes),
                truncate_tld2(&tp.hostname, suffixes),
            ) else {
                continue;
            };
            if tld2 == domain.value {
                continue;
            }
            seen.entry(domain.value)
                .or_default()
                .entry(window)
                .or_default()
                .insert(tld2);
        }
    }
    seen.into_iter()
        .filter_map(|(domain, windows)| {
            let hot: Vec<(i64, usize)> = windows
                .into_iter()
                .map(|(w, subs)| (w, subs.len()))
                .filter(|&(_, n)| n >= threshold)
                .collect();
            (hot.len() >= 2).then(|| RuleCandidate {
                rule: CleaningRule::replace(&domain),
                windows: hot,
            })
        })
        .collect()
}

pub const DEFAULT_DETECTION_THRESHOLD: usize = 100;
pub const DEFAULT_DETECTION_WINDOW_DAYS: u32 = 7;

impl core::fmt::Display for CleaningRule {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{},{}", self.target_domain, self.action.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::hash_truncated;
    use crate::probe::ResourceType;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn suffixes() -> SuffixList {
        SuffixList::parse("com\nnet\nexample\n", "test")
    }

    fn page(hostname: &str, path: &str, tps: Vec<ThirdPartyStats>) -> PageLoadRecord {
        PageLoadRecord {
            protocol: Protocol::Https,
            hostname: hostname.into(),
            path: path.into(),
            started_at: 1_522_540_800_000,
            third_parties: tps,
            client_id: Some("client-1".into()),
            user_country: Some("FR".into()),
        }
    }

    #[test]
    fn hashes_first_party_fields() {
        let s = Sanitizer::default().sanitize(
            &page("analytics.twitter.com", "/user/jack/home", vec![]),
            &suffixes(),
        );
        assert_eq!(s.hostname_digest, hash_truncated("analytics.twitter.com"));
        assert_eq!(s.path_digest, hash_truncated("/user/"));
        assert_eq!(s.hostname_digest, "91e6da9d7eb4c0d5");
        assert_eq!(s.path_digest, "00d6b15ae97d06f7");
        assert_eq!(s.month.to_string(), "2018-04");
        let json = s.to_json();
        assert!(!json.contains("twitter") && !json.contains("jack") && !json.contains("client-1"));
        assert_eq!(SanitizedPageLoad::from_json(&json).unwrap(), s);
    }

    #[test]
    fn merges_collapsed_third_parties() {
        let mut a = ThirdPartyStats::new("a.x.tracker.example");
        a.count_before_request = 2;
        a.content_types.insert(ResourceType::Script, 2);
        let mut b = ThirdPartyStats::new("b.x.tracker.example");
        b.count_before_request = 3;
        b.content_types.insert(ResourceType::Script, 1);
        b.content_types.insert(ResourceType::Image, 2);
        let s = Sanitizer::default().sanitize(&page("site.com", "/", vec![a, b]), &suffixes());
        assert_eq!(s.third_parties.len(), 1);
        let tp = &s.third_parties[0];
        assert_eq!(tp.hostname, "x.tracker.example");
        assert_eq!(tp.count_before_request, 5);
        assert_eq!(tp.content_types[&ResourceType::Script], 3);
        assert_eq!(tp.content_types[&ResourceType::Image], 2);
    }

    #[test]
    fn cleaning_rule_replaces_subdomain() {
        let rule = CleaningRule::replace("userid-cdn.example");
        assert_eq!(
            rule.apply("u12345.userid-cdn.example").unwrap(),
            "___.userid-cdn.example"
        );
        assert_eq!(
            rule.apply("___.userid-cdn.example").unwrap(),
            "___.userid-cdn.example"
        );
        assert!(rule.apply("userid-cdn.example").is_none());
        assert!(rule.apply("xuserid-cdn.example").is_none());
        let sanitizer = Sanitizer::new(8, vec![rule]);
        assert_eq!(
            sanitizer.clean_hostname("a.u12345.userid-cdn.example", &suffixes()),
            "___.userid-cdn.example"
        );
    }

    #[test]
    fn truncation_length_is_configurable() {
        let s = Sanitizer::new(4, vec![]).sanitize(&page("site.com", "/", vec![]), &suffixes());
        assert_eq!(s.hostname_digest.len(), 8);
    }

    #[test]
    fn dictionary_lookup_recovers_public_sites() {
        let public = ["lemonde.fr", "example.com", "news.example.com", "bbc.co.uk"];
        let sanitizer = Sanitizer::default();
        let dictionary: BTreeMap<String, &str> =
            public.iter().map(|h| (sanitizer.digest(h), *h)).collect();
        for host in public {
            let s = sanitizer.sanitize(&page(host, "/", vec![]), &suffixes());
            assert_eq!(dictionary.get(&s.hostname_digest), Some(&host));
        }
        // a high-entropy private path is not in the dictionary
        let private = sanitizer.sanitize(
            &page(
                "example.com",
                "/reset-9f8e7d6c5b4a39281706f5e4d3c2b1a0/x",
                vec![],
            ),
            &suffixes(),
        );
        assert!(!dictionary.contains_key(&private.path_digest));
    }

    fn record_at(day: i64, hosts: &[String]) -> PageLoadRecord {
        let mut p = page(
            "site.com",
            "/",
            hosts
                .iter()
                .map(|h| ThirdPartyStats::new(h.as_str()))
                .collect(),
        );
        p.started_at = day * 86_400_000;
        p
    }

    #[test]
    fn high_cardinality_needs_persistence() {
        let list = suffixes();
        let mut corpus = Vec::new();
        for i in 0..1000 {
            let day = if i < 500 { 0 } else { 7 };
            corpus.push(record_at(
                day,
                &[format!("u{i}.acct.example"), "www.stable.example".into()],
            ));
        }
        let found = detect_high_cardinality(&corpus, &list, 100, 7);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].rule.target_domain, "acct.example");
        assert_eq!(found[0].windows, vec![(0, 500), (1, 500)]);

        let one_window: Vec<_> = (0..1000)
            .map(|i| record_at(0, &[format!("u{i}.acct.example")]))
            .collect();
        assert!(detect_high_cardinality(&one_window, &list, 100, 7).is_empty());
    }

    fn stats_strategy() -> impl Strategy<Value = ThirdPartyStats> {
        (
            prop_oneof![
                Just("a.x.tracker.example"),
                Just("b.x.tracker.example"),
                Just("x.tracker.example"),
                Just("cdn.other.com"),
                Just("other.com")
            ],
            proptest::collection::vec(0u64..50, 8),
        )
            .prop_map(|(host, n)| {
                let mut s = ThirdPartyStats::new(host);
                s.count_before_request = n[0];
                s.count_headers_received = n[1];
                s.cookies_sent = n[2];
                s.content_length_sum = n[3] * 1000;
                s.scheme_http = n[4];
                s.content_types.insert(ResourceType::Script, n[5]);
                s.response_countries.insert("US".into(), n[6]);
                s.unsafe_identifier = n[7];
                s
            })
    }

    proptest! {
        #[test]
        fn third_party_cleaning_is_idempotent(tps in proptest::collection::vec(stats_strategy(), 0..6)) {
            let list = suffixes();
            let sanitizer = Sanitizer::new(8, vec![CleaningRule::replace("tracker.example")]);
            let once = sanitizer.merge_third_parties(&tps, &list);
            let twice = sanitizer.merge_third_parties(&once, &list);
            prop_assert_eq!(once, twice);
        }
    }
}
