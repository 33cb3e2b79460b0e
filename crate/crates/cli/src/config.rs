//! Pipeline configuration. Values come from command-line flags and are then
//! overridden by a TOML config file when one is given.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trackscope_core::domain::SuffixList;
use trackscope_core::geo::GeoTable;
use trackscope_core::hash::DEFAULT_TRUNCATION_BYTES;
use trackscope_core::quorum::QuorumConfig;
use trackscope_core::sanitize::CleaningRule;
use trackscope_core::time::MonthKey;
use trackscope_core::trackerdb::TrackerDb;
use trackscope_core::transport::TransportConfig;

use crate::error::{CliError, Result};
use crate::formats;

/// Environment variable naming a config file.
pub const CONFIG_ENV: &str = "TRACKSCOPE_CONFIG";

pub const DEFAULT_SUFFIX_LIST: &str = include_str!("../data/public_suffix_icann.dat");
pub const DEFAULT_TRACKERS: &str = include_str!("../data/trackers.csv");
pub const DEFAULT_CLEANING_RULES: &str = include_str!("../data/cleaning_rules.csv");
pub const DEFAULT_GEO: &str = include_str!("../data/geo.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `None` selects the bundled data file.
    pub suffix_list: Option<PathBuf>,
    pub tracker_db: Option<PathBuf>,
    pub cleaning_rules: Option<PathBuf>,
    pub geo_table: Option<PathBuf>,
    /// Prior quorum counts to start from.
    pub quorum_import: Option<PathBuf>,
    pub quorum: QuorumConfig,
    pub hash_truncation_bytes: usize,
    pub transport: TransportConfig,
    /// Restrict reports to one month.
    pub month: Option<MonthKey>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            suffix_list: None,
            tracker_db: None,
            cleaning_rules: None,
            geo_table: None,
            quorum_import: None,
            quorum: QuorumConfig::default(),
            hash_truncation_bytes: DEFAULT_TRUNCATION_BYTES,
            transport: TransportConfig::default(),
            month: None,
        }
    }
}

/// Config file contents; every key is optional and overrides the flag value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    suffix_list: Option<PathBuf>,
    tracker_db: Option<PathBuf>,
    cleaning_rules: Option<PathBuf>,
    geo_table: Option<PathBuf>,
    quorum_import: Option<PathBuf>,
    quorum: Option<FileQuorum>,
    hash_truncation_bytes: Option<usize>,
    transport: Option<FileTransport>,
    month: Option<MonthKey>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileQuorum {
    k: Option<u32>,
    min_value_length: Option<usize>,
    window_days: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTransport {
    proxies: Option<usize>,
    delay_min_ms: Option<i64>,
    delay_max_ms: Option<i64>,
    seed: Option<u64>,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Applies a TOML file on top of `self`. Relative paths in the file
    /// are taken relative to the file's directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = |p: Option<PathBuf>| p.map(|p| resolve(base, p));
        if let Some(p) = rel(file.suffix_list) {
            self.suffix_list = Some(p);
        }
        if let Some(p) = rel(file.tracker_db) {
            self.tracker_db = Some(p);
        }
        if let Some(p) = rel(file.cleaning_rules) {
            self.cleaning_rules = Some(p);
        }
        if let Some(p) = rel(file.geo_table) {
            self.geo_table = Some(p);
        }
        if let Some(p) = rel(file.quorum_import) {
            self.quorum_import = Some(p);
        }
        if let Some(q) = file.quorum {
            self.quorum.k = q.k.unwrap_or(self.quorum.k);
            self.quorum.min_value_length =
                q.min_value_length.unwrap_or(self.quorum.min_value_length);
            self.quorum.window_days = q.window_days.unwrap_or(self.quorum.window_days);
        }
        if let Some(n) = file.hash_truncation_bytes {
            self.hash_truncation_bytes = n;
        }
        if let Some(t) = file.transport {
            self.transport.proxies = t.proxies.unwrap_or(self.transport.proxies);
            self.transport.delay_min_ms = t.delay_min_ms.unwrap_or(self.transport.delay_min_ms);
            self.transport.delay_max_ms = t.delay_max_ms.unwrap_or(self.transport.delay_max_ms);
            self.transport.seed = t.seed.unwrap_or(self.transport.seed);
        }
        if file.month.is_some() {
            self.month = file.month;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.quorum
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(1..=16).contains(&self.hash_truncation_bytes) {
            return Err(CliError::Config(format!(
                "hash_truncation_bytes must be in 1..=16, got {}",
                self.hash_truncation_bytes
            )));
        }
        if self.transport.proxies == 0 {
            return Err(CliError::Config(
                "transport needs at least one proxy".into(),
            ));
        }
        if self.transport.delay_min_ms > self.transport.delay_max_ms
            || self.transport.delay_min_ms < 0
        {
            return Err(CliError::Config(format!(
                "bad delay window [{}, {}]",
                self.transport.delay_min_ms, self.transport.delay_max_ms
            )));
        }
        for path in [
            &self.suffix_list,
            &self.tracker_db,
            &self.cleaning_rules,
            &self.geo_table,
            &self.quorum_import,
        ]
        .into_iter()
        .flatten()
        {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "{} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn load_tables(&self) -> Result<Tables> {
        let suffixes = match &self.suffix_list {
            Some(p) => {
                let label = p
                    .file_name()
                    .map_or("suffixes".into(), |n| n.to_string_lossy());
                formats::parse_suffix_list(&formats::read_text(p)?, &label)
            }
            None => formats::parse_suffix_list(DEFAULT_SUFFIX_LIST, "icann-snapshot"),
        };
        let db = match &self.tracker_db {
            Some(p) => formats::parse_tracker_db(&formats::read_text(p)?, p)?,
            None => {
                formats::parse_tracker_db(DEFAULT_TRACKERS, Path::new("<bundled trackers.csv>"))?
            }
        };
        let rules = match &self.cleaning_rules {
            Some(p) => formats::parse_cleaning_rules(&formats::read_text(p)?, p)?,
            None => formats::parse_cleaning_rules(
                DEFAULT_CLEANING_RULES,
                Path::new("<bundled cleaning_rules.csv>"),
            )?,
        };
        let geo = match &self.geo_table {
            Some(p) => formats::parse_geo(&formats::read_text(p)?, p)?,
            None => formats::parse_geo(DEFAULT_GEO, Path::new("<bundled geo.csv>"))?,
        };
        Ok(Tables {
            suffixes,
            db,
            rules,
            geo,
        })
    }
}

pub struct Tables {
    pub suffixes: SuffixList,
    pub db: TrackerDb,
    pub rules: Vec<CleaningRule>,
    pub geo: GeoTable,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "hash_truncation_bytes = 6\nmonth = \"2018-05\"\ntracker_db = \"db.csv\"\n[quorum]\nk = 9\n[transport]\nseed = 42\n",
        )
        .unwrap();
        let mut cfg = PipelineConfig {
            hash_truncation_bytes: 8,
            ..PipelineConfig::default()
        };
        cfg.transport.proxies = 7;
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.hash_truncation_bytes, 6);
        assert_eq!(cfg.quorum.k, 9);
        assert_eq!(cfg.quorum.min_value_length, 2);
        assert_eq!(cfg.transport.seed, 42);
        assert_eq!(cfg.transport.proxies, 7);
        assert_eq!(cfg.month, MonthKey::new(2018, 5));
        assert_eq!(cfg.tracker_db, Some(dir.path().join("db.csv")));
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "colour = 3\n").unwrap();
        let err = PipelineConfig::default().apply_file(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bundled_tables_load() {
        let tables = PipelineConfig::default().load_tables().unwrap();
        assert!(tables.suffixes.len() > 5000);
        assert!(tables.db.len() >= 40);
        assert_eq!(tables.geo.resolve_country("46.1.1.1").unwrap(), "RU");
        assert_eq!(tables.rules.len(), 2);
    }
}
