use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

use super::DomainError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Http,
    Https,
    Other(String),
}

impl Scheme {
    fn from_raw(raw: &str) -> Self {
        match raw {
            "http" => Scheme::Http,
            "https" => Scheme::Https,
            other => Scheme::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Scheme::Http => "http",
            Scheme::Https => "https",
            Scheme::Other(s) => s,
        }
    }
}

/// An absolute URL split into the parts the probe cares about.
///
/// No percent-decoding or path resolution is applied: the sanitizer hashes
/// raw forms. Userinfo, port and fragment are dropped during parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedUrl {
    pub scheme: Scheme,
    pub hostname: String,
    pub path: String,
    pub query: String,
    pub parameter_string: String,
}

impl fmt::Display for ParsedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}://{}{}",
            self.scheme.as_str(),
            self.hostname,
            self.path
        )?;
        if !self.parameter_string.is_empty() {
            write!(f, ";{}", self.parameter_string)?;
        }
        if !self.query.is_empty() {
            write!(f, "?{}", self.query)?;
        }
        Ok(())
    }
}

impl ParsedUrl {
    /// True when data rides in the query or parameter string.
    pub fn carries_url_data(&self) -> bool {
        !self.query.is_empty() || !self.parameter_string.is_empty()
    }
}

pub fn parse_url(raw: &str) -> Result<ParsedUrl, DomainError> {
    let malformed = || DomainError::MalformedUrl(raw.to_string());
    let raw_trimmed = raw.trim();
    let (scheme, rest) = raw_trimmed.split_once("://").ok_or_else(malformed)?;
    let valid_scheme = scheme
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic())
        && scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    if !valid_scheme {
        return Err(malformed());
    }

    let authority_end = rest.find(['/', '?', '#', ';']).unwrap_or(rest.len());
    let (authority, tail) = rest.split_at(authority_end);
    let hostname = host_from_authority(authority).ok_or_else(malformed)?;

    let tail = tail.split('#').next().unwrap_or("");
    let (path_part, query) = match tail.split_once('?') {
        Some((p, q)) => (p, q),
        None => (tail, ""),
    };
    let (path, parameter_string) = match path_part.split_once(';') {
        Some((p, params)) => (p, params),
        None => (path_part, ""),
    };
    let path = if path.is_empty() {
        String::from("/")
    } else {
        path.to_string()
    };

    Ok(ParsedUrl {
        scheme: Scheme::from_raw(&scheme.to_ascii_lowercase()),
        hostname,
        path,
        query: query.to_string(),
        parameter_string: parameter_string.to_string(),
    })
}

fn host_from_authority(authority: &str) -> Option<String> {
    let host_port = match authority.rfind('@') {
        Some(at) => &authority[at + 1..],
        None => authority,
    };
    let host = if host_port.starts_with('[') {
        let close = host_port.find(']')?;
        &host_port[..=close]
    } else {
        host_port.split(':').next().unwrap_or("")
    };
    let host = host.strip_suffix('.').unwrap_or(host);
    if host.is_empty() {
        return None;
    }
    let lower = host.to_ascii_lowercase();
    if lower.starts_with('[') {
        let inner = &lower[1..lower.len() - 1];
        return inner
            .parse::<core::net::Ipv6Addr>()
            .ok()
            .map(|_| lower.clone());
    }
    let valid = lower.split('.').all(|label| {
        !label.is_empty()
            && label
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
    });
    valid.then_some(lower)
}

/// Truncates a path to its first level: `/user/jack/home` becomes `/user/`.
///
/// Single-segment paths keep the segment and gain a trailing slash
/// (`/index.html` becomes `/index.html/`).
pub fn first_level_path(path: &str) -> String {
    let trimmed = path.strip_prefix('/').unwrap_or(path);
    match trimmed.split('/').next() {
        Some(segment) if !segment.is_empty() => format!("/{segment}/"),
        _ => String::from("/"),
    }
}
