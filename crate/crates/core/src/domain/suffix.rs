use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleKind {
    Normal,
    Exception,
}

#[derive(Debug, Default, Clone)]
struct Node {
    rule: Option<RuleKind>,
    children: BTreeMap<String, Node>,
}

/// Public-suffix rules indexed by reversed labels.
///
/// Lookup follows the public-suffix algorithm: exception rules beat
/// wildcard and normal rules, the longest match wins otherwise, and
/// hostnames under an unlisted TLD fall back to the implicit `*` rule
/// (the last label is the suffix).
#[derive(Debug, Clone, Default)]
pub struct SuffixList {
    root: Node,
    rule_count: usize,
    source_version: String,
}

impl SuffixList {
    pub fn new(source_version: impl Into<String>) -> Self {
        Self {
            root: Node::default(),
            rule_count: 0,
            source_version: source_version.into(),
        }
    }

    /// Parses the public-suffix file grammar: one rule per line, `//`
    /// comments, `!` exceptions and `*.` wildcards. Anything after the
    /// first whitespace on a line is ignored.
    pub fn parse(text: &str, source_version: impl Into<String>) -> Self {
        let mut list = Self::new(source_version);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            if let Some(rule) = line.split_whitespace().next() {
                list.add_rule(rule);
            }
        }
        list
    }

    pub fn add_rule(&mut self, rule: &str) {
        let rule = rule.to_lowercase();
        let (kind, body) = match rule.strip_prefix('!') {
            Some(body) => (RuleKind::Exception, body),
            None => (RuleKind::Normal, rule.as_str()),
        };
        if body.is_empty() {
            return;
        }
        let mut node = &mut self.root;
        for label in body.rsplit('.') {
            node = node.children.entry(label.to_string()).or_default();
        }
        if node.rule.is_none() {
            self.rule_count += 1;
        }
        node.rule = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.rule_count
    }

    pub fn is_empty(&self) -> bool {
        self.rule_count == 0
    }

    pub fn source_version(&self) -> &str {
        &self.source_version
    }

    /// Number of trailing labels of `labels` (given in natural order) that
    /// form the public suffix. Always at least one.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let mut best = 1;
        let mut node = &self.root;
        for (i, label) in labels.iter().rev().enumerate() {
            let depth = i + 1;
            let exact = node.children.get(*label);
            let wildcard = node.children.get("*");
            if let Some(child) = exact {
                if child.rule == Some(RuleKind::Exception) {
                    return depth - 1;
                }
            }
            let exact_rule = exact.is_some_and(|c| c.rule == Some(RuleKind::Normal));
            let wildcard_rule = wildcard.is_some_and(|c| c.rule == Some(RuleKind::Normal));
            if exact_rule || wildcard_rule {
                best = depth;
            }
            match exact.or(wildcard) {
                Some(next) => node = next,
                None => break,
            }
        }
        best
    }
}

/// A hostname's registrable form (TLD+1).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegistrableDomain {
    pub value: String,
    /// Labels belonging to the public suffix; zero for IP literals.
    pub suffix_depth: usize,
}

pub fn is_ip_literal(hostname: &str) -> bool {
    let bare = hostname
        .strip_prefix('[')
        .and_then(|h| h.strip_suffix(']'))
        .unwrap_or(hostname);
    bare.parse::<core::net::IpAddr>().is_ok()
}

fn normalize_host(hostname: &str) -> Result<String, DomainError> {
    let host = hostname.strip_suffix('.').unwrap_or(hostname);
    if host.is_empty() || host.split('.').any(str::is_empty) {
        return Err(DomainError::InvalidHostname(hostname.to_string()));
    }
    Ok(host.to_lowercase())
}

fn split_registrable(
    hostname: &str,
    suffixes: &SuffixList,
) -> Result<(String, Option<usize>), DomainError> {
    let host = normalize_host(hostname)?;
    if is_ip_literal(&host) {
        return Ok((host, None));
    }
    let labels: Vec<&str> = host.split('.').collect();
    let suffix_len = suffixes.suffix_len(&labels);
    if labels.len() <= suffix_len {
        return Err(DomainError::SuffixOnly(host));
    }
    Ok((host, Some(suffix_len)))
}

fn tail_labels(host: &str, count: usize) -> &str {
    let mut dots = 0;
    for (i, b) in host.bytes().enumerate().rev() {
        if b == b'.' {
            dots += 1;
            if dots == count {
                return &host[i + 1..];
            }
        }
    }
    host
}

pub fn registrable_domain(
    hostname: &str,
    suffixes: &SuffixList,
) -> Result<RegistrableDomain, DomainError> {
    let (host, suffix_len) = split_registrable(hostname, suffixes)?;
    Ok(match suffix_len {
        None => RegistrableDomain {
            value: host,
            suffix_depth: 0,
        },
        Some(len) => RegistrableDomain {
            value: tail_labels(&host, len + 1).to_string(),
            suffix_depth: len,
        },
    })
}

/// Keeps at most one label beyond the registrable domain.
pub fn truncate_tld2(hostname: &str, suffixes: &SuffixList) -> Result<String, DomainError> {
    let (host, suffix_len) = split_registrable(hostname, suffixes)?;
    Ok(match suffix_len {
        None => host,
        Some(len) => tail_labels(&host, len + 2).to_string(),
    })
}

pub fn is_third_party(
    page_hostname: &str,
    request_hostname: &str,
    suffixes: &SuffixList,
) -> Result<bool, DomainError> {
    let page = registrable_domain(page_hostname, suffixes)?;
    let request = registrable_domain(request_hostname, suffixes)?;
    Ok(page.value != request.value)
}

/// Registrable domain used for first/third-party comparison, falling back
/// to the hostname itself when it has none (bare public suffixes,
/// single-label intranet names).
pub fn site_key(hostname: &str, suffixes: &SuffixList) -> String {
    match registrable_domain(hostname, suffixes) {
        Ok(domain) => domain.value,
        Err(_) => hostname.to_lowercase(),
    }
}
