//! On-disk formats: suffix list, tracker database, cleaning rules, geo
//! table, event and sanitized-page logs, and quorum exports.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use trackscope_core::domain::SuffixList;
use trackscope_core::geo::GeoTable;
use trackscope_core::hash::hash_truncated;
use trackscope_core::probe::RequestEvent;
use trackscope_core::quorum::QuorumStore;
use trackscope_core::sanitize::{CleaningRule, SanitizedPageLoad};
use trackscope_core::trackerdb::{TrackerDb, TrackerDbEntry};

use crate::error::{CliError, Result};

pub const TRACKER_DB_HEADER: [&str; 5] = [
    "pattern",
    "tracker_id",
    "tracker_name",
    "company_id",
    "category",
];

const VERSION_PRAGMA: &str = "# version:";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Version string of the form `<label>@<content digest>`.
pub fn content_version(label: &str, text: &str) -> String {
    format!("{label}@{}", hash_truncated(text))
}

pub fn parse_suffix_list(text: &str, label: &str) -> SuffixList {
    SuffixList::parse(text, content_version(label, text))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| CliError::parse(path, 1, e))?
        .clone();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        let line = header.position().map_or(1, |p| p.line());
        return Err(CliError::parse(
            path,
            line,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Tracker database CSV. An optional `# version: <v>` line names the
/// release; without one the version is derived from the content.
pub fn parse_tracker_db(text: &str, path: &Path) -> Result<TrackerDb> {
    let version = text
        .lines()
        .find_map(|l| l.trim().strip_prefix(VERSION_PRAGMA))
        .map(|v| v.trim().to_string())
        .unwrap_or_else(|| content_version("trackers", text));
    let mut reader = csv_reader(text);
    check_header(&mut reader, &TRACKER_DB_HEADER, path)?;
    let mut db = TrackerDb::new(version);
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::parse(path, line, e)
        })?;
        let line = record_line(&record);
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let category = field(4)
            .parse()
            .map_err(|e| CliError::parse(path, line, e))?;
        db.insert(TrackerDbEntry {
            pattern: field(0),
            tracker_id: field(1),
            tracker_name: field(2),
            company_id: field(3),
            category,
        })
        .map_err(|e| CliError::parse(path, line, e))?;
    }
    Ok(db)
}

pub fn write_tracker_db(db: &TrackerDb, out: impl Write) -> Result<()> {
    let mut out = out;
    writeln!(out, "{VERSION_PRAGMA} {}", db.version()).map_err(|e| CliError::io("<output>", e))?;
    let mut writer = csv::Writer::from_writer(out);
    let werr = |e: csv::Error| CliError::Other(e.to_string());
    writer.write_record(TRACKER_DB_HEADER).map_err(werr)?;
    for e in db.entries() {
        writer
            .write_record([
                e.pattern.as_str(),
                &e.tracker_id,
                &e.tracker_name,
                &e.company_id,
                e.category.as_str(),
            ])
            .map_err(werr)?;
    }
    writer.flush().map_err(|e| CliError::io("<output>", e))
}

/// Cleaning rules CSV with header `target_domain,action`.
pub fn parse_cleaning_rules(text: &str, path: &Path) -> Result<Vec<CleaningRule>> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &["target_domain", "action"], path)?;
    let mut rules = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path, 0, e))?;
        let line = record_line(&record);
        let target = record.get(0).unwrap_or("").to_ascii_lowercase();
        if target.is_empty() {
            return Err(CliError::parse(path, line, "empty target_domain"));
        }
        let action = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| CliError::parse(path, line, e))?;
        rules.push(CleaningRule {
            target_domain: target,
            action,
        });
    }
    Ok(rules)
}

/// IP-prefix to country CSV with header `prefix,country`.
pub fn parse_geo(text: &str, path: &Path) -> Result<GeoTable> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &["prefix", "country"], path)?;
    let mut geo = GeoTable::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path, 0, e))?;
        let line = record_line(&record);
        geo.insert(record.get(0).unwrap_or(""), record.get(1).unwrap_or(""))
            .map_err(|e| CliError::parse(path, line, e))?;
    }
    Ok(geo)
}

/// First IPv4 prefix listed for each country, in file order.
pub fn geo_country_prefixes(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut reader = csv_reader(text);
    for record in reader.records().flatten() {
        let (Some(prefix), Some(country)) = (record.get(0), record.get(1)) else {
            continue;
        };
        let country = country.to_ascii_uppercase();
        if !prefix.contains(':') && !out.iter().any(|(c, _)| *c == country) {
            out.push((country, prefix.to_string()));
        }
    }
    out
}

/// Newline-delimited JSON, one value per non-blank line, with 1-based line
/// numbers.
pub fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(u64, T)>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let n = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CliError::parse(path, n, e))?;
        out.push((n, value));
    }
    Ok(out)
}

pub fn write_ndjson<'a, T: Serialize + 'a>(
    path: &Path,
    values: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut buf = Vec::new();
    for v in values {
        serde_json::to_writer(&mut buf, v).map_err(|e| CliError::Other(e.to_string()))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<(u64, RequestEvent)>> {
    read_ndjson(path)
}

pub fn read_sanitized(path: &Path) -> Result<Vec<SanitizedPageLoad>> {
    Ok(read_ndjson(path)?.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct QuorumRow {
    key: String,
    value_digest: String,
    cardinality: u64,
}

pub fn write_quorum(store: &QuorumStore, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Other(e.to_string()))?;
    for (key, digest, cardinality) in store.entries() {
        writer
            .serialize(QuorumRow {
                key: key.to_string(),
                value_digest: digest.to_string(),
                cardinality,
            })
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Seeds `store` from a `key,value_digest,cardinality` export.
pub fn import_quorum(store: &mut QuorumStore, text: &str, path: &Path) -> Result<()> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &["key", "value_digest", "cardinality"], path)?;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path, 0, e))?;
        let line = record_line(&record);
        let row: QuorumRow = record
            .deserialize(None)
            .map_err(|e| CliError::parse(path, line, e))?;
        store.import(&row.key, &row.value_digest, row.cardinality);
    }
    Ok(())
}
