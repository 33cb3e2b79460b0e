//! Static IP-prefix to country table with longest-prefix lookup.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::net::IpAddr;

/// Country code reported when no prefix matches.
pub const UNKNOWN_COUNTRY: &str = "--";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeoError {
    #[error("malformed ip address {0:?}")]
    MalformedIp(String),
    #[error("malformed prefix {0:?}")]
    MalformedPrefix(String),
    #[error("country code must be two ASCII letters, got {0:?}")]
    BadCountry(String),
}

#[derive(Debug, Clone)]
struct Prefix<T> {
    network: T,
    len: u8,
    country: String,
}

#[derive(Debug, Clone, Default)]
pub struct GeoTable {
    v4: Vec<Prefix<u32>>,
    v6: Vec<Prefix<u128>>,
}

fn mask_v4(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - u32::from(len))
    }
}

fn mask_v6(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - u32::from(len))
    }
}

fn parse_ip(raw: &str) -> Option<IpAddr> {
    let bare = raw
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(raw.trim());
    bare.parse().ok()
}

impl GeoTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a `network/len` prefix. A bare address is a host route.
    pub fn insert(&mut self, prefix: &str, country: &str) -> Result<(), GeoError> {
        let country = country.trim();
        if country.len() != 2 || !country.bytes().all(|b| b.is_ascii_alphabetic()) {
            return Err(GeoError::BadCountry(country.to_string()));
        }
        let country = country.to_ascii_uppercase();
        let bad = || GeoError::MalformedPrefix(prefix.to_string());
        let (addr, len) = match prefix.trim().split_once('/') {
            Some((a, l)) => (a, Some(l.parse::<u8>().map_err(|_| bad())?)),
            None => (prefix.trim(), None),
        };
        match parse_ip(addr).ok_or_else(bad)? {
            IpAddr::V4(ip) => {
                let len = len.unwrap_or(32);
                if len > 32 {
                    return Err(bad());
                }
                self.v4.push(Prefix {
                    network: u32::from(ip) & mask_v4(len),
                    len,
                    country,
                });
            }
            IpAddr::V6(ip) => {
                let len = len.unwrap_or(128);
                if len > 128 {
                    return Err(bad());
                }
                self.v6.push(Prefix {
                    network: u128::from(ip) & mask_v6(len),
                    len,
                    country,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.v4.len() + self.v6.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Country of the longest matching prefix, or `"--"`.
    pub fn resolve_country(&self, ip: &str) -> Result<&str, GeoError> {
        let addr = parse_ip(ip).ok_or_else(|| GeoError::MalformedIp(ip.to_string()))?;
        let best = match addr {
            IpAddr::V4(ip) => {
                let ip = u32::from(ip);
                self.v4
                    .iter()
                    .filter(|p| ip & mask_v4(p.len) == p.network)
                    .max_by_key(|p| p.len)
                    .map(|p| p.country.as_str())
            }
            IpAddr::V6(ip) => {
                let ip = u128::from(ip);
                self.v6
                    .iter()
                    .filter(|p| ip & mask_v6(p.len) == p.network)
                    .max_by_key(|p| p.len)
                    .map(|p| p.country.as_str())
            }
        };
        Ok(best.unwrap_or(UNKNOWN_COUNTRY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> GeoTable {
        let mut t = GeoTable::new();
        t.insert("198.51.100.0/24", "US").unwrap();
        t.insert("198.51.0.0/16", "ie").unwrap();
        t.insert("2001:db8::/32", "DE").unwrap();
        t.insert("0.0.0.0/0", "ZZ").unwrap();
        t
    }

    #[test]
    fn longest_prefix_wins() {
        let t = table();
        assert_eq!(t.resolve_country("198.51.100.7").unwrap(), "US");
        assert_eq!(t.resolve_country("198.51.7.7").unwrap(), "IE");
        assert_eq!(t.resolve_country("203.0.113.1").unwrap(), "ZZ");
        assert_eq!(t.resolve_country("2001:db8::1").unwrap(), "DE");
        assert_eq!(t.resolve_country("[2001:db8:ffff::1]").unwrap(), "DE");
    }

    #[test]
    fn unmatched_is_unknown() {
        let mut t = GeoTable::new();
        t.insert("198.51.100.0/24", "US").unwrap();
        assert_eq!(t.resolve_country("192.0.2.1").unwrap(), "--");
        assert_eq!(t.resolve_country("2001:db9::1").unwrap(), "--");
    }

    #[test]
    fn errors() {
        let mut t = GeoTable::new();
        assert!(matches!(
            t.resolve_country("300.1.1.1"),
            Err(GeoError::MalformedIp(_))
        ));
        assert!(matches!(
            t.insert("10.0.0.0/33", "US"),
            Err(GeoError::MalformedPrefix(_))
        ));
        assert!(matches!(
            t.insert("10.0.0.0/8", "USA"),
            Err(GeoError::BadCountry(_))
        ));
    }

    // Oracle for v6: compare the leading bits textually expanded from the
    // address segments rather than through integer masks.
    #[test]
    fn v6_prefix_matches_segment_oracle() {
        let mut t = GeoTable::new();
        t.insert("2001:db8::/32", "DE").unwrap();
        t.insert("2001:db8:8000::/33", "FR").unwrap();
        for probe in [
            "2001:db8::1",
            "2001:db8:7fff::1",
            "2001:db8:8000::1",
            "2001:db8:ffff:1::9",
            "2001:db9::",
        ] {
            let segs = probe.parse::<core::net::Ipv6Addr>().unwrap().segments();
            let expected = if segs[0] != 0x2001 || segs[1] != 0x0db8 {
                "--"
            } else if segs[2] & 0x8000 != 0 {
                "FR"
            } else {
                "DE"
            };
            assert_eq!(t.resolve_country(probe).unwrap(), expected, "{probe}");
        }
    }
}
