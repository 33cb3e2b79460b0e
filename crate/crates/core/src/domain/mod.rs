//! URL decomposition and registrable-domain arithmetic.

mod suffix;
mod url;

pub use suffix::{
    is_ip_literal, is_third_party, registrable_domain, site_key, truncate_tld2, RegistrableDomain,
    SuffixList,
};
pub use url::{first_level_path, parse_url, ParsedUrl, Scheme};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("malformed url: {0}")]
    MalformedUrl(String),
    #[error("invalid hostname: {0:?}")]
    InvalidHostname(String),
    #[error("{0} is a public suffix and has no registrable domain")]
    SuffixOnly(String),
}
