//! The one hashing primitive used repo-wide: truncated MD5.

use alloc::string::String;

use md5::{Digest, Md5};

pub const DEFAULT_TRUNCATION_BYTES: usize = 8;

/// Lowercase hex of the first eight bytes of `MD5(value)`.
pub fn hash_truncated(value: &str) -> String {
    hash_truncated_to(value, DEFAULT_TRUNCATION_BYTES)
}

/// Like [`hash_truncated`] with a configurable prefix length, clamped to
/// the 16-byte digest.
pub fn hash_truncated_to(value: &str, bytes: usize) -> String {
    let digest = Md5::digest(value.as_bytes());
    to_hex(&digest[..bytes.min(digest.len())])
}

pub(crate) fn md5_prefix_u64(data: &[u8]) -> u64 {
    let digest = Md5::digest(data);
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

pub(crate) fn md5_bytes(parts: &[&[u8]]) -> [u8; 16] {
    let mut hasher = Md5::new();
    for part in parts {
        hasher.update(part);
    }
    let mut out = [0u8; 16];
    out.copy_from_slice(&hasher.finalize());
    out
}

fn to_hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(DIGITS[(b >> 4) as usize] as char);
        out.push(DIGITS[(b & 0x0f) as usize] as char);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // RFC 1321 test vectors, truncated to 8 bytes.
    #[test]
    fn rfc1321_vectors() {
        assert_eq!(hash_truncated(""), "d41d8cd98f00b204");
        assert_eq!(hash_truncated("abc"), "900150983cd24fb0");
        assert_eq!(hash_truncated("message digest"), "f96b697d7cb7938d");
        assert_eq!(
            hash_truncated_to("abc", 16),
            "900150983cd24fb0d6963f7d28e17f72"
        );
    }

    // Expected values from a reference MD5 implementation (Python hashlib).
    #[test]
    fn reference_digests() {
        assert_eq!(hash_truncated("example.com"), "5ababd603b227803");
        assert_eq!(hash_truncated("analytics.twitter.com"), "91e6da9d7eb4c0d5");
        assert_eq!(hash_truncated("/user/"), "00d6b15ae97d06f7");
    }

    #[test]
    fn shape_and_determinism() {
        let a = hash_truncated("example.com");
        assert_eq!(a, hash_truncated("example.com"));
        assert_eq!(a.len(), 16);
        assert!(a
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)));
        assert_eq!(hash_truncated_to("x", 4).len(), 8);
        assert_eq!(hash_truncated_to("x", 99).len(), 32);
    }
}
