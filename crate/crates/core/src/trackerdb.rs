//! Domain-to-tracker attribution.
//!
//! Patterns are hostname suffixes stored in a reversed-label trie. A lookup
//! walks the hostname from its last label and keeps the deepest pattern it
//! passes, so with patterns `a.example.com` and `example.com` the host
//! `a.a.example.com` resolves to `a.example.com` while `c.example.com`
//! falls through to the catch-all.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Advertising,
    SiteAnalytics,
    SocialMedia,
    Cdn,
    Essential,
    AudioVideoPlayer,
    Hosting,
    CustomerInteraction,
    Misc,
    ExtensionsMitm,
    Unknown,
}

impl Category {
    pub const ALL: [Category; 11] = [
        Category::Advertising,
        Category::SiteAnalytics,
        Category::SocialMedia,
        Category::Cdn,
        Category::Essential,
        Category::AudioVideoPlayer,
        Category::Hosting,
        Category::CustomerInteraction,
        Category::Misc,
        Category::ExtensionsMitm,
        Category::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Advertising => "advertising",
            Category::SiteAnalytics => "site_analytics",
            Category::SocialMedia => "social_media",
            Category::Cdn => "cdn",
            Category::Essential => "essential",
            Category::AudioVideoPlayer => "audio_video_player",
            Category::Hosting => "hosting",
            Category::CustomerInteraction => "customer_interaction",
            Category::Misc => "misc",
            Category::ExtensionsMitm => "extensions_mitm",
            Category::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = DbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| DbError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerDbEntry {
    pub pattern: String,
    pub tracker_id: String,
    pub tracker_name: String,
    pub company_id: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DbError {
    #[error("duplicate pattern {0:?}")]
    DuplicatePattern(String),
    #[error("invalid pattern {0:?}")]
    InvalidPattern(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("tracker {tracker_id:?} is assigned to both {first:?} and {second:?}")]
    InconsistentTracker {
        tracker_id: String,
        first: String,
        second: String,
    },
    #[error("unknown tracker {0:?}")]
    UnknownTracker(String),
}

/// Tracker-level facts shared by all of a tracker's patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerInfo {
    pub tracker_id: String,
    pub tracker_name: String,
    pub company_id: String,
    pub category: Category,
}

#[derive(Debug, Default, Clone)]
struct Node {
    entry: Option<usize>,
    children: BTreeMap<String, Node>,
}

#[derive(Debug, Clone, Default)]
pub struct TrackerDb {
    version: String,
    entries: Vec<TrackerDbEntry>,
    root: Node,
    trackers: BTreeMap<String, TrackerInfo>,
}

fn valid_pattern(pattern: &str) -> bool {
    !pattern.is_empty()
        && pattern.split('.').all(|label| {
            !label.is_empty()
                && label
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
        })
}

impl TrackerDb {
    pub fn new(version: impl Into<String>) -> Self {
        Self {
            version: version.into(),
            ..Self::default()
        }
    }

    pub fn from_entries(
        version: impl Into<String>,
        entries: impl IntoIterator<Item = TrackerDbEntry>,
    ) -> Result<Self, DbError> {
        let mut db = Self::new(version);
        for entry in entries {
            db.insert(entry)?;
        }
        Ok(db)
    }

    pub fn insert(&mut self, mut entry: TrackerDbEntry) -> Result<(), DbError> {
        entry.pattern = entry.pattern.trim().to_ascii_lowercase();
        if !valid_pattern(&entry.pattern) {
            return Err(DbError::InvalidPattern(entry.pattern));
        }
        if let Some(existing) = self.trackers.get(&entry.tracker_id) {
            if existing.company_id != entry.company_id {
                return Err(DbError::InconsistentTracker {
                    tracker_id: entry.tracker_id,
                    first: existing.company_id.clone(),
                    second: entry.company_id,
                });
            }
        }
        let mut node = &mut self.root;
        for label in entry.pattern.rsplit('.') {
            node = node.children.entry(label.to_string()).or_default();
        }
        if node.entry.is_some() {
            return Err(DbError::DuplicatePattern(entry.pattern));
        }
        node.entry = Some(self.entries.len());
        self.trackers
            .entry(entry.tracker_id.clone())
            .or_insert_with(|| TrackerInfo {
                tracker_id: entry.tracker_id.clone(),
                tracker_name: entry.tracker_name.clone(),
                company_id: entry.company_id.clone(),
                category: entry.category,
            });
        self.entries.push(entry);
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[TrackerDbEntry] {
        &self.entries
    }

    pub fn trackers(&self) -> impl Iterator<Item = &TrackerInfo> {
        self.trackers.values()
    }

    pub fn tracker(&self, tracker_id: &str) -> Option<&TrackerInfo> {
        self.trackers.get(tracker_id)
    }

    /// Entry whose pattern is the deepest label-aligned suffix of `hostname`.
    pub fn match_domain(&self, hostname: &str) -> Option<&TrackerDbEntry> {
        self.match_depth(hostname).map(|(entry, _)| entry)
    }

    /// Like [`match_domain`](Self::match_domain), also returning how many
    /// labels the pattern spans.
    pub fn match_depth(&self, hostname: &str) -> Option<(&TrackerDbEntry, usize)> {
        let host = hostname.strip_suffix('.').unwrap_or(hostname);
        let mut node = &self.root;
        let mut best = None;
        for (depth, label) in host.rsplit('.').enumerate() {
            match node.children.get(label) {
                Some(next) => node = next,
                None => break,
            }
            if let Some(idx) = node.entry {
                best = Some((&self.entries[idx], depth + 1));
            }
        }
        best
    }

    pub fn company_of(&self, tracker_id: &str) -> Result<&str, DbError> {
        self.trackers
            .get(tracker_id)
            .map(|t| t.company_id.as_str())
            .ok_or_else(|| DbError::UnknownTracker(tracker_id.to_string()))
    }
}
