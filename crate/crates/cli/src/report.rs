//! Report files: one JSON document per month plus CSV tables.
//!
//! Column order:
//! - `trackers-<month>.csv`: tracker_id, tracker_name, company_id, category,
//!   pages_seen, sites_seen, reach, site_reach, reach_ratio, cookie,
//!   fingerprint, tracking, secure, blocked, mean_requests_per_page,
//!   mean_tracking_requests_per_page, content_length_median_mb
//! - `sites-<month>.csv`: hostname_digest, pages, avg_third_parties_per_page,
//!   avg_trackers_per_page, proportion_pages_with_tracking,
//!   avg_third_party_content_length
//! - `companies-<month>.csv`: company_id, trackers (`;`-joined), pages_seen,
//!   sites_seen, reach, site_reach
//! - `matrix-<month>.csv`: from, to, fraction

use std::fs;
use std::path::Path;

use serde::Serialize;
use trackscope_core::aggregate::AggregateReport;

use crate::error::{CliError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_report(path: &Path) -> Result<AggregateReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e))
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct TrackerRow<'a> {
    tracker_id: &'a str,
    tracker_name: &'a str,
    company_id: &'a str,
    category: &'a str,
    pages_seen: u64,
    sites_seen: u64,
    reach: f64,
    site_reach: f64,
    reach_ratio: f64,
    cookie: f64,
    fingerprint: f64,
    tracking: f64,
    secure: f64,
    blocked: f64,
    mean_requests_per_page: f64,
    mean_tracking_requests_per_page: f64,
    content_length_median_mb: Option<f64>,
}

#[derive(Serialize)]
struct SiteRow<'a> {
    hostname_digest: &'a str,
    pages: u64,
    avg_third_parties_per_page: f64,
    avg_trackers_per_page: f64,
    proportion_pages_with_tracking: f64,
    avg_third_party_content_length: f64,
}

#[derive(Serialize)]
struct CompanyRow<'a> {
    company_id: &'a str,
    trackers: String,
    pages_seen: u64,
    sites_seen: u64,
    reach: f64,
    site_reach: f64,
}

#[derive(Serialize)]
struct MatrixRow<'a> {
    from: &'a str,
    to: &'a str,
    fraction: f64,
}

/// Writes the report's JSON and CSV files; returns their file names.
pub fn write_report(report: &AggregateReport, dir: &Path) -> Result<Vec<String>> {
    let m = report.month;
    let names = [
        format!("report-{m}.json"),
        format!("trackers-{m}.csv"),
        format!("sites-{m}.csv"),
        format!("companies-{m}.csv"),
        format!("matrix-{m}.csv"),
    ];
    write_json(&dir.join(&names[0]), report)?;
    write_csv(
        &dir.join(&names[1]),
        report.trackers.iter().map(|t| TrackerRow {
            tracker_id: &t.tracker_id,
            tracker_name: &t.tracker_name,
            company_id: &t.company_id,
            category: t.category.as_str(),
            pages_seen: t.pages_seen,
            sites_seen: t.sites_seen,
            reach: t.reach,
            site_reach: t.site_reach,
            reach_ratio: t.reach_ratio,
            cookie: t.proportion_cookie_context,
            fingerprint: t.proportion_fingerprint_context,
            tracking: t.proportion_tracking_context,
            secure: t.proportion_secure_context,
            blocked: t.proportion_blocked,
            mean_requests_per_page: t.mean_requests_per_page,
            mean_tracking_requests_per_page: t.mean_tracking_requests_per_page,
            content_length_median_mb: t.content_length_stats.map(|s| s.median_mb),
        }),
    )?;
    write_csv(
        &dir.join(&names[2]),
        report.sites.iter().map(|s| SiteRow {
            hostname_digest: &s.hostname_digest,
            pages: s.pages,
            avg_third_parties_per_page: s.avg_third_parties_per_page,
            avg_trackers_per_page: s.avg_trackers_per_page,
            proportion_pages_with_tracking: s.proportion_pages_with_tracking,
            avg_third_party_content_length: s.avg_third_party_content_length,
        }),
    )?;
    write_csv(
        &dir.join(&names[3]),
        report.companies.iter().map(|c| CompanyRow {
            company_id: &c.company_id,
            trackers: c.trackers.join(";"),
            pages_seen: c.pages_seen,
            sites_seen: c.sites_seen,
            reach: c.reach,
            site_reach: c.site_reach,
        }),
    )?;
    let matrix: Vec<MatrixRow> = report
        .country_matrix
        .iter()
        .flat_map(|(from, row)| {
            row.iter().map(move |(to, f)| MatrixRow {
                from,
                to,
                fraction: *f,
            })
        })
        .collect();
    if matrix.is_empty() {
        fs::write(dir.join(&names[4]), "from,to,fraction\n")
            .map_err(|e| CliError::io(dir.join(&names[4]), e))?;
    } else {
        write_csv(&dir.join(&names[4]), matrix)?;
    }
    Ok(names.to_vec())
}
