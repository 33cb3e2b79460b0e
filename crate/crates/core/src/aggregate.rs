//! Corpus-level metrics over sanitized page loads.
//!
//! Each page is reduced to a [`Partial`] of counts and sets; partials merge
//! associatively and ratios are only formed in [`Partial::finalize`]. The
//! standalone functions compute single metrics directly from a corpus.
//!
//! Third parties resolve to trackers through the tracker database. A
//! hostname with no matching pattern becomes its own tracker with category
//! `unknown`, keyed by the (already TLD+2) hostname.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geo::UNKNOWN_COUNTRY;
use crate::probe::{ResourceType, ThirdPartyStats};
use crate::sanitize::SanitizedPageLoad;
use crate::time::MonthKey;
use crate::trackerdb::{Category, TrackerDb};

pub const REPORT_SCHEMA_VERSION: &str = "trackscope-report/1";

const BYTES_PER_MB: f64 = 1_000_000.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus spans several months: {0} and {1}")]
    MixedMonths(MonthKey, MonthKey),
    #[error("ratio undefined for {0}: site reach is zero")]
    UndefinedRatio(String),
    #[error("tracker {0} does not appear in the corpus")]
    TrackerAbsent(String),
    #[error("slice selects no page loads")]
    EmptySlice,
}

/// Tracker identity a hostname resolves to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub tracker_id: String,
    pub tracker_name: String,
    pub company_id: String,
    pub category: Category,
    /// False for hostnames with no database pattern.
    pub known: bool,
}

pub fn resolve(db: &TrackerDb, hostname: &str) -> Resolved {
    let matched = db
        .match_domain(hostname)
        .and_then(|e| db.tracker(&e.tracker_id));
    match matched {
        Some(info) => Resolved {
            tracker_id: info.tracker_id.clone(),
            tracker_name: info.tracker_name.clone(),
            company_id: info.company_id.clone(),
            category: info.category,
            known: true,
        },
        None => Resolved {
            tracker_id: hostname.to_string(),
            tracker_name: hostname.to_string(),
            company_id: hostname.to_string(),
            category: Category::Unknown,
            known: false,
        },
    }
}

/// One tracker's merged counters on one page.
#[derive(Debug, Clone)]
pub struct PageTracker {
    pub info: Resolved,
    pub stats: ThirdPartyStats,
    /// Requests from hostnames that were themselves in tracking context.
    pub tracking_requests: u64,
}

/// Groups a page's third parties by tracker.
pub fn page_trackers(page: &SanitizedPageLoad, db: &TrackerDb) -> BTreeMap<String, PageTracker> {
    let mut out: BTreeMap<String, PageTracker> = BTreeMap::new();
    for tp in &page.third_parties {
        let info = resolve(db, &tp.hostname);
        let tracking = if tp.tracking_context() {
            tp.count_before_request
        } else {
            0
        };
        match out.get_mut(&info.tracker_id) {
            Some(pt) => {
                pt.stats.merge(tp);
                pt.tracking_requests += tracking;
            }
            None => {
                let mut stats = ThirdPartyStats::new(info.tracker_id.clone());
                stats.merge(tp);
                out.insert(
                    info.tracker_id.clone(),
                    PageTracker {
                        info,
                        stats,
                        tracking_requests: tracking,
                    },
                );
            }
        }
    }
    out
}

fn page_content_length(page: &SanitizedPageLoad) -> u64 {
    page.third_parties
        .iter()
        .map(|t| t.content_length_sum)
        .sum()
}

fn page_all_secure(page: &SanitizedPageLoad) -> bool {
    page.third_parties.iter().all(ThirdPartyStats::all_secure)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentLengthStats {
    pub median_mb: f64,
    pub q1_mb: f64,
    pub q3_mb: f64,
    pub samples: u64,
}

impl ContentLengthStats {
    fn from_values(mut values: Vec<f64>) -> Option<Self> {
        values.sort_by(f64::total_cmp);
        Some(Self {
            median_mb: quantile_sorted(&values, 0.5)? / BYTES_PER_MB,
            q1_mb: quantile_sorted(&values, 0.25)? / BYTES_PER_MB,
            q3_mb: quantile_sorted(&values, 0.75)? / BYTES_PER_MB,
            samples: values.len() as u64,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct TrackerPartial {
    tracker_name: String,
    company_id: String,
    category: Option<Category>,
    pages: u64,
    sites: BTreeSet<String>,
    cookie_pages: u64,
    fingerprint_pages: u64,
    tracking_pages: u64,
    secure_pages: u64,
    blocked_pages: u64,
    content_type_pages: BTreeMap<ResourceType, u64>,
    requests: u64,
    tracking_requests: u64,
    /// Multiset of per-page content lengths, value -> occurrences.
    content_lengths: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct SitePartial {
    pages: u64,
    third_parties: u64,
    known_trackers: u64,
    tracked_pages: u64,
    /// Distinct trackers per category, summed over pages.
    category_trackers: BTreeMap<Category, u64>,
    content_length: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct CompanyPartial {
    trackers: BTreeSet<String>,
    pages: u64,
    sites: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct CountryRow {
    pages: u64,
    to: BTreeMap<String, u64>,
}

/// Mergeable per-corpus counts. Ratios are formed only at finalization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partial {
    pages: u64,
    months: BTreeSet<MonthKey>,
    secure_pages: u64,
    tracked_pages: u64,
    tracking_requests: u64,
    trackers: BTreeMap<String, TrackerPartial>,
    sites: BTreeMap<String, SitePartial>,
    companies: BTreeMap<String, CompanyPartial>,
    countries: BTreeMap<String, CountryRow>,
    /// category -> (pages with the category, pages where it was blocked)
    category_blocks: BTreeMap<Category, (u64, u64)>,
}

fn merge_counts<K: Ord + Clone>(into: &mut BTreeMap<K, u64>, from: &BTreeMap<K, u64>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

impl TrackerPartial {
    fn merge(&mut self, other: &TrackerPartial) {
        if self.category.is_none() {
            self.tracker_name = other.tracker_name.clone();
            self.company_id = other.company_id.clone();
            self.category = other.category;
        }
        self.pages += other.pages;
        self.sites.extend(other.sites.iter().cloned());
        self.cookie_pages += other.cookie_pages;
        self.fingerprint_pages += other.fingerprint_pages;
        self.tracking_pages += other.tracking_pages;
        self.secure_pages += other.secure_pages;
        self.blocked_pages += other.blocked_pages;
        merge_counts(&mut self.content_type_pages, &other.content_type_pages);
        self.requests += other.requests;
        self.tracking_requests += other.tracking_requests;
        merge_counts(&mut self.content_lengths, &other.content_lengths);
    }
}

impl SitePartial {
    fn merge(&mut self, other: &SitePartial) {
        self.pages += other.pages;
        self.third_parties += other.third_parties;
        self.known_trackers += other.known_trackers;
        self.tracked_pages += other.tracked_pages;
        merge_counts(&mut self.category_trackers, &other.category_trackers);
        self.content_length += other.content_length;
    }
}

impl Partial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_corpus(corpus: &[SanitizedPageLoad], db: &TrackerDb) -> Self {
        let mut partial = Self::new();
        for page in corpus {
            partial.add_page(page, db);
        }
        partial
    }

    pub fn pages(&self) -> u64 {
        self.pages
    }

    pub fn add_page(&mut self, page: &SanitizedPageLoad, db: &TrackerDb) {
        let trackers = page_trackers(page, db);
        let site = page.hostname_digest.clone();
        self.pages += 1;
        self.months.insert(page.month);
        if page_all_secure(page) {
            self.secure_pages += 1;
        }
        let tracked = trackers.values().any(|t| t.stats.tracking_context());
        if tracked {
            self.tracked_pages += 1;
        }
        let content_length = page_content_length(page);

        let mut category_pages: BTreeMap<Category, (u64, bool)> = BTreeMap::new();
        let mut company_trackers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, pt) in &trackers {
            self.tracking_requests += pt.tracking_requests;
            let t = self.trackers.entry(id.clone()).or_default();
            if t.category.is_none() {
                t.tracker_name = pt.info.tracker_name.clone();
                t.company_id = pt.info.company_id.clone();
                t.category = Some(pt.info.category);
            }
            let s = &pt.stats;
            t.pages += 1;
            t.sites.insert(site.clone());
            t.cookie_pages += u64::from(s.cookie_context());
            t.fingerprint_pages += u64::from(s.fingerprint_context());
            t.tracking_pages += u64::from(s.tracking_context());
            t.secure_pages += u64::from(s.all_secure());
            t.blocked_pages += u64::from(s.was_blocked());
            for (ty, n) in &s.content_types {
                if *n > 0 {
                    *t.content_type_pages.entry(*ty).or_default() += 1;
                }
            }
            t.requests += s.count_before_request;
            t.tracking_requests += pt.tracking_requests;
            *t.content_lengths.entry(s.content_length_sum).or_default() += 1;

            let cat = category_pages.entry(pt.info.category).or_default();
            cat.0 += 1;
            cat.1 |= s.was_blocked();
            company_trackers
                .entry(pt.info.company_id.as_str())
                .or_default()
                .push(id.as_str());
        }
        for (cat, (_, blocked)) in &category_pages {
            let entry = self.category_blocks.entry(*cat).or_default();
            entry.0 += 1;
            entry.1 += u64::from(*blocked);
        }
        for (company, members) in company_trackers {
            let c = self.companies.entry(company.to_string()).or_default();
            c.pages += 1;
            c.sites.insert(site.clone());
            c.trackers.extend(members.into_iter().map(str::to_string));
        }

        let s = self.sites.entry(site).or_default();
        s.pages += 1;
        s.third_parties += page.third_parties.len() as u64;
        s.known_trackers += trackers.values().filter(|t| t.info.known).count() as u64;
        s.tracked_pages += u64::from(tracked);
        for (cat, (n, _)) in &category_pages {
            *s.category_trackers.entry(*cat).or_default() += n;
        }
        s.content_length += content_length;

        if let Some(from) = &page.user_country {
            let row = self.countries.entry(from.clone()).or_default();
            row.pages += 1;
            let dests: BTreeSet<&String> = page
                .third_parties
                .iter()
                .flat_map(|t| t.response_countries.iter())
                .filter(|(c, n)| **n > 0 && c.as_str() != UNKNOWN_COUNTRY)
                .map(|(c, _)| c)
                .collect();
            for to in dests {
                *row.to.entry(to.clone()).or_default() += 1;
            }
        }
    }

    /// Associative, commutative combination of two partials.
    pub fn merge(&mut self, other: &Partial) {
        self.pages += other.pages;
        self.months.extend(other.months.iter().copied());
        self.secure_pages += other.secure_pages;
        self.tracked_pages += other.tracked_pages;
        self.tracking_requests += other.tracking_requests;
        for (id, t) in &other.trackers {
            self.trackers.entry(id.clone()).or_default().merge(t);
        }
        for (id, s) in &other.sites {
            self.sites.entry(id.clone()).or_default().merge(s);
        }
        for (id, c) in &other.companies {
            let mine = self.companies.entry(id.clone()).or_default();
            mine.trackers.extend(c.trackers.iter().cloned());
            mine.pages += c.pages;
            mine.sites.extend(c.sites.iter().cloned());
        }
        for (from, row) in &other.countries {
            let mine = self.countries.entry(from.clone()).or_default();
            mine.pages += row.pages;
            merge_counts(&mut mine.to, &row.to);
        }
        for (cat, (n, b)) in &other.category_blocks {
            let mine = self.category_blocks.entry(*cat).or_default();
            mine.0 += n;
            mine.1 += b;
        }
    }

    /// Forms every ratio. The partial must cover exactly one month.
    pub fn finalize(&self, tracker_db_version: &str) -> Result<AggregateReport, AggregateError> {
        if self.pages == 0 {
            return Err(AggregateError::EmptyCorpus);
        }
        let mut months = self.months.iter();
        let month = *months.next().ok_or(AggregateError::EmptyCorpus)?;
        if let Some(other) = months.next() {
            return Err(AggregateError::MixedMonths(month, *other));
        }
        let pages = self.pages;
        let site_count = self.sites.len() as u64;

        let mut trackers: Vec<TrackerAggregate> = self
            .trackers
            .iter()
            .map(|(id, t)| {
                let mut lengths = Vec::new();
                for (len, n) in &t.content_lengths {
                    for _ in 0..*n {
                        lengths.push(*len as f64);
                    }
                }
                let reach = ratio(t.pages, pages);
                let site_reach = ratio(t.sites.len() as u64, site_count);
                TrackerAggregate {
                    tracker_id: id.clone(),
                    tracker_name: t.tracker_name.clone(),
                    company_id: t.company_id.clone(),
                    category: t.category.unwrap_or(Category::Unknown),
                    pages_seen: t.pages,
                    sites_seen: t.sites.len() as u64,
                    reach,
                    site_reach,
                    reach_ratio: reach / site_reach,
                    proportion_cookie_context: ratio(t.cookie_pages, t.pages),
                    proportion_fingerprint_context: ratio(t.fingerprint_pages, t.pages),
                    proportion_tracking_context: ratio(t.tracking_pages, t.pages),
                    proportion_secure_context: ratio(t.secure_pages, t.pages),
                    proportion_blocked: ratio(t.blocked_pages, t.pages),
                    content_type_page_proportions: t
                        .content_type_pages
                        .iter()
                        .map(|(ty, n)| (*ty, ratio(*n, t.pages)))
                        .collect(),
                    mean_requests_per_page: ratio(t.requests, t.pages),
                    mean_tracking_requests_per_page: ratio(t.tracking_requests, t.pages),
                    content_length_stats: ContentLengthStats::from_values(lengths),
                }
            })
            .collect();
        trackers.sort_by(|a, b| {
            b.pages_seen
                .cmp(&a.pages_seen)
                .then_with(|| a.tracker_id.cmp(&b.tracker_id))
        });

        let sites: Vec<SiteAggregate> = self
            .sites
            .iter()
            .map(|(digest, s)| SiteAggregate {
                hostname_digest: digest.clone(),
                pages: s.pages,
                avg_third_parties_per_page: ratio(s.third_parties, s.pages),
                avg_trackers_per_page: ratio(s.known_trackers, s.pages),
                proportion_pages_with_tracking: ratio(s.tracked_pages, s.pages),
                category_mix: s
                    .category_trackers
                    .iter()
                    .map(|(c, n)| (*c, ratio(*n, s.pages)))
                    .collect(),
                avg_third_party_content_length: ratio(s.content_length, s.pages),
            })
            .collect();

        let mut companies: Vec<CompanyAggregate> = self
            .companies
            .iter()
            .map(|(id, c)| CompanyAggregate {
                company_id: id.clone(),
                trackers: c.trackers.iter().cloned().collect(),
                pages_seen: c.pages,
                sites_seen: c.sites.len() as u64,
                reach: ratio(c.pages, pages),
                site_reach: ratio(c.sites.len() as u64, site_count),
            })
            .collect();
        companies.sort_by(|a, b| {
            b.pages_seen
                .cmp(&a.pages_seen)
                .then_with(|| a.company_id.cmp(&b.company_id))
        });

        let country_matrix = self
            .countries
            .iter()
            .map(|(from, row)| {
                let cells = row
                    .to
                    .iter()
                    .map(|(to, n)| (to.clone(), ratio(*n, row.pages)))
                    .collect();
                (from.clone(), cells)
            })
            .collect();

        let category_block_rates = self
            .category_blocks
            .iter()
            .map(|(c, (n, b))| (*c, ratio(*b, *n)))
            .collect();

        let mut reach_by_category: BTreeMap<Category, (f64, u64)> = BTreeMap::new();
        for t in &trackers {
            let e = reach_by_category.entry(t.category).or_default();
            e.0 += t.reach;
            e.1 += 1;
        }
        let category_mean_reach = reach_by_category
            .into_iter()
            .map(|(c, (sum, n))| (c, sum / n as f64))
            .collect();

        let site_means: Vec<f64> = sites
            .iter()
            .map(|s| s.avg_third_party_content_length)
            .collect();
        let avg_trackers_per_site = if sites.is_empty() {
            0.0
        } else {
            sites.iter().map(|s| s.avg_trackers_per_page).sum::<f64>() / sites.len() as f64
        };

        Ok(AggregateReport {
            schema_version: REPORT_SCHEMA_VERSION.to_string(),
            tracker_db_version: tracker_db_version.to_string(),
            month,
            corpus_size: pages,
            site_count,
            summary: Summary {
                proportion_pages_with_tracking: ratio(self.tracked_pages, pages),
                avg_trackers_per_site,
                avg_tracking_requests_per_page: ratio(self.tracking_requests, pages),
                content_length: ContentLengthStats::from_values(site_means),
            },
            trackers,
            sites,
            companies,
            country_matrix,
            https_series: alloc::vec![HttpsPoint {
                month,
                all_secure: ratio(self.secure_pages, pages),
            }],
            category_block_rates,
            category_mean_reach,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerAggregate {
    pub tracker_id: String,
    pub tracker_name: String,
    pub company_id: String,
    pub category: Category,
    pub pages_seen: u64,
    pub sites_seen: u64,
    pub reach: f64,
    pub site_reach: f64,
    pub reach_ratio: f64,
    pub proportion_cookie_context: f64,
    pub proportion_fingerprint_context: f64,
    pub proportion_tracking_context: f64,
    pub proportion_secure_context: f64,
    pub proportion_blocked: f64,
    pub content_type_page_proportions: BTreeMap<ResourceType, f64>,
    pub mean_requests_per_page: f64,
    pub mean_tracking_requests_per_page: f64,
    /// Over the pages where the tracker appears.
    pub content_length_stats: Option<ContentLengthStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAggregate {
    pub hostname_digest: String,
    pub pages: u64,
    pub avg_third_parties_per_page: f64,
    /// Distinct database-matched trackers per page.
    pub avg_trackers_per_page: f64,
    pub proportion_pages_with_tracking: f64,
    /// Mean distinct trackers per page, by category.
    pub category_mix: BTreeMap<Category, f64>,
    /// Bytes.
    pub avg_third_party_content_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyAggregate {
    pub company_id: String,
    pub trackers: Vec<String>,
    pub pages_seen: u64,
    pub sites_seen: u64,
    pub reach: f64,
    pub site_reach: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HttpsPoint {
    pub month: MonthKey,
    pub all_secure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Pages with at least one third party in tracking context.
    pub proportion_pages_with_tracking: f64,
    /// Database-matched trackers per page, averaged per site then across sites.
    pub avg_trackers_per_site: f64,
    pub avg_tracking_requests_per_page: f64,
    /// Median and quartiles of per-site mean third-party bytes per page.
    pub content_length: Option<ContentLengthStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: String,
    pub tracker_db_version: String,
    pub month: MonthKey,
    pub corpus_size: u64,
    pub site_count: u64,
    pub summary: Summary,
    pub trackers: Vec<TrackerAggregate>,
    pub sites: Vec<SiteAggregate>,
    pub companies: Vec<CompanyAggregate>,
    /// source country -> destination country -> fraction of source pages.
    pub country_matrix: BTreeMap<String, BTreeMap<String, f64>>,
    pub https_series: Vec<HttpsPoint>,
    pub category_block_rates: BTreeMap<Category, f64>,
    /// Mean reach of the trackers in each category.
    pub category_mean_reach: BTreeMap<Category, f64>,
}

impl AggregateReport {
    pub fn tracker(&self, id: &str) -> Option<&TrackerAggregate> {
        self.trackers.iter().find(|t| t.tracker_id == id)
    }

    pub fn company(&self, id: &str) -> Option<&CompanyAggregate> {
        self.companies.iter().find(|c| c.company_id == id)
    }

    pub fn site(&self, digest: &str) -> Option<&SiteAggregate> {
        self.sites.iter().find(|s| s.hostname_digest == digest)
    }
}

/// Report for a single-month corpus.
pub fn aggregate_month(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
) -> Result<AggregateReport, AggregateError> {
    Partial::from_corpus(corpus, db).finalize(db.version())
}

/// One report per month present, in month order. Each report's HTTPS
/// series runs from the first month up to its own.
pub fn aggregate_by_month(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
) -> Result<Vec<AggregateReport>, AggregateError> {
    if corpus.is_empty() {
        return Err(AggregateError::EmptyCorpus);
    }
    let mut by_month: BTreeMap<MonthKey, Partial> = BTreeMap::new();
    for page in corpus {
        by_month.entry(page.month).or_default().add_page(page, db);
    }
    let mut series = Vec::new();
    let mut reports = Vec::new();
    for partial in by_month.values() {
        let mut report = partial.finalize(db.version())?;
        series.extend(report.https_series.iter().copied());
        report.https_series = series.clone();
        reports.push(report);
    }
    Ok(reports)
}

fn pages_with<'c>(
    corpus: &'c [SanitizedPageLoad],
    db: &'c TrackerDb,
    tracker_id: &'c str,
) -> impl Iterator<Item = (&'c SanitizedPageLoad, PageTracker)> + 'c {
    corpus.iter().filter_map(move |page| {
        page_trackers(page, db)
            .remove(tracker_id)
            .map(|pt| (page, pt))
    })
}

/// Fraction of page loads on which the tracker appears.
pub fn tracker_reach(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    tracker_id: &str,
) -> Result<f64, AggregateError> {
    if corpus.is_empty() {
        return Err(AggregateError::EmptyCorpus);
    }
    let hits = pages_with(corpus, db, tracker_id).count() as u64;
    Ok(ratio(hits, corpus.len() as u64))
}

/// Fraction of distinct sites on which the tracker appears at least once.
pub fn site_reach(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    tracker_id: &str,
) -> Result<f64, AggregateError> {
    if corpus.is_empty() {
        return Err(AggregateError::EmptyCorpus);
    }
    let all: BTreeSet<&str> = corpus.iter().map(|p| p.hostname_digest.as_str()).collect();
    let hit: BTreeSet<&str> = pages_with(corpus, db, tracker_id)
        .map(|(p, _)| p.hostname_digest.as_str())
        .collect();
    Ok(ratio(hit.len() as u64, all.len() as u64))
}

pub fn reach_ratio(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    tracker_id: &str,
) -> Result<f64, AggregateError> {
    let sr = site_reach(corpus, db, tracker_id)?;
    if sr == 0.0 {
        return Err(AggregateError::UndefinedRatio(tracker_id.to_string()));
    }
    Ok(tracker_reach(corpus, db, tracker_id)? / sr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextProportions {
    pub cookie: f64,
    pub fingerprint: f64,
    pub tracking: f64,
    pub secure: f64,
}

/// Page-count proportions over the pages where the tracker appears.
pub fn context_proportions(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    tracker_id: &str,
) -> Result<ContextProportions, AggregateError> {
    let (mut n, mut cookie, mut fp, mut tracking, mut secure) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (_, pt) in pages_with(corpus, db, tracker_id) {
        n += 1;
        cookie += u64::from(pt.stats.cookie_context());
        fp += u64::from(pt.stats.fingerprint_context());
        tracking += u64::from(pt.stats.tracking_context());
        secure += u64::from(pt.stats.all_secure());
    }
    if n == 0 {
        return Err(AggregateError::TrackerAbsent(tracker_id.to_string()));
    }
    Ok(ContextProportions {
        cookie: ratio(cookie, n),
        fingerprint: ratio(fp, n),
        tracking: ratio(tracking, n),
        secure: ratio(secure, n),
    })
}

/// For every resource type, the fraction of the tracker's pages that
/// loaded at least one resource of that type. Unused types map to 0.
pub fn content_type_usage(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    tracker_id: &str,
) -> Result<BTreeMap<ResourceType, f64>, AggregateError> {
    let mut n = 0u64;
    let mut used: BTreeMap<ResourceType, u64> = ResourceType::ALL.iter().map(|t| (*t, 0)).collect();
    for (_, pt) in pages_with(corpus, db, tracker_id) {
        n += 1;
        for (ty, count) in &pt.stats.content_types {
            if *count > 0 {
                *used.entry(*ty).or_default() += 1;
            }
        }
    }
    if n == 0 {
        return Err(AggregateError::TrackerAbsent(tracker_id.to_string()));
    }
    Ok(used.into_iter().map(|(t, c)| (t, ratio(c, n))).collect())
}

/// Per category, the fraction of pages carrying that category where at
/// least one of its requests was blocked.
pub fn category_block_rates(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
) -> BTreeMap<Category, f64> {
    let mut counts: BTreeMap<Category, (u64, u64)> = BTreeMap::new();
    for page in corpus {
        let mut seen: BTreeMap<Category, bool> = BTreeMap::new();
        for pt in page_trackers(page, db).values() {
            *seen.entry(pt.info.category).or_default() |= pt.stats.was_blocked();
        }
        for (cat, blocked) in seen {
            let e = counts.entry(cat).or_default();
            e.0 += 1;
            e.1 += u64::from(blocked);
        }
    }
    counts
        .into_iter()
        .map(|(c, (n, b))| (c, ratio(b, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HttpsSlice {
    All,
    /// Pages whose first-party digest is in the set.
    Sites(BTreeSet<String>),
    /// Pages where the tracker appears; only its own requests are judged.
    Tracker(String),
}

/// Fraction of page loads in the slice whose judged third-party requests
/// all used HTTPS. Pages with no third parties count as secure.
pub fn https_adoption(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    slice: &HttpsSlice,
) -> Result<f64, AggregateError> {
    let (mut n, mut secure) = (0u64, 0u64);
    for page in corpus {
        let verdict = match slice {
            HttpsSlice::All => Some(page_all_secure(page)),
            HttpsSlice::Sites(set) => set
                .contains(&page.hostname_digest)
                .then(|| page_all_secure(page)),
            HttpsSlice::Tracker(id) => page_trackers(page, db)
                .get(id)
                .map(|pt| pt.stats.all_secure()),
        };
        if let Some(ok) = verdict {
            n += 1;
            secure += u64::from(ok);
        }
    }
    if n == 0 {
        return Err(AggregateError::EmptySlice);
    }
    Ok(ratio(secure, n))
}

/// HTTPS adoption per month, in month order.
pub fn https_series(
    corpus: &[SanitizedPageLoad],
    db: &TrackerDb,
    slice: &HttpsSlice,
) -> Result<Vec<HttpsPoint>, AggregateError> {
    let mut by_month: BTreeMap<MonthKey, Vec<SanitizedPageLoad>> = BTreeMap::new();
    for page in corpus {
        by_month.entry(page.month).or_default().push(page.clone());
    }
    if by_month.is_empty() {
        return Err(AggregateError::EmptySlice);
    }
    by_month
        .into_iter()
        .map(|(month, pages)| {
            Ok(HttpsPoint {
                month,
                all_secure: https_adoption(&pages, db, slice)?,
            })
        })
        .collect()
}

/// Median and quartiles, in MB, of per-site mean third-party bytes per page.
pub fn content_length_stats(
    corpus: &[SanitizedPageLoad],
) -> Result<ContentLengthStats, AggregateError> {
    let mut sites: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for page in corpus {
        let e = sites.entry(page.hostname_digest.as_str()).or_default();
        e.0 += page_content_length(page);
        e.1 += 1;
    }
    let means = sites.values().map(|(sum, n)| ratio(*sum, *n)).collect();
    ContentLengthStats::from_values(means).ok_or(AggregateError::EmptyCorpus)
}

/// Source country -> destination country -> fraction of that source's
/// pages with a third-party response served from the destination. Pages
/// without a source annotation are skipped.
pub fn country_matrix(corpus: &[SanitizedPageLoad]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut partial = Partial::new();
    let empty = TrackerDb::new("");
    for page in corpus.iter().filter(|p| p.user_country.is_some()) {
        partial.add_page(page, &empty);
    }
    partial
        .countries
        .iter()
        .map(|(from, row)| {
            let cells = row
                .to
                .iter()
                .map(|(to, n)| (to.clone(), ratio(*n, row.pages)))
                .collect();
            (from.clone(), cells)
        })
        .collect()
}
