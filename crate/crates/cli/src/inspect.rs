//! Entity profiles read back from a report.

use std::fmt::Write as _;

use serde::Serialize;
use trackscope_core::aggregate::{
    AggregateReport, CompanyAggregate, SiteAggregate, TrackerAggregate,
};

use crate::error::{CliError, Result};

const TOP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Tracker,
    Site,
    Company,
}

impl EntityKind {
    fn name(self) -> &'static str {
        match self {
            EntityKind::Tracker => "tracker",
            EntityKind::Site => "site",
            EntityKind::Company => "company",
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile<'a> {
    Tracker {
        #[serde(flatten)]
        tracker: &'a TrackerAggregate,
        company_reach: Option<f64>,
    },
    Site {
        #[serde(flatten)]
        site: &'a SiteAggregate,
    },
    Company {
        #[serde(flatten)]
        company: &'a CompanyAggregate,
        members: Vec<&'a TrackerAggregate>,
    },
}

pub fn profile<'a>(report: &'a AggregateReport, kind: EntityKind, id: &str) -> Result<Profile<'a>> {
    let unknown = || CliError::UnknownEntity {
        kind: kind.name(),
        id: id.to_string(),
    };
    match kind {
        EntityKind::Tracker => {
            let tracker = report.tracker(id).ok_or_else(unknown)?;
            Ok(Profile::Tracker {
                tracker,
                company_reach: report.company(&tracker.company_id).map(|c| c.reach),
            })
        }
        EntityKind::Site => Ok(Profile::Site {
            site: report.site(id).ok_or_else(unknown)?,
        }),
        EntityKind::Company => {
            let company = report.company(id).ok_or_else(unknown)?;
            let members = report
                .trackers
                .iter()
                .filter(|t| t.company_id == company.company_id)
                .collect();
            Ok(Profile::Company { company, members })
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

pub fn render_text(report: &AggregateReport, profile: &Profile<'_>) -> String {
    let mut out = String::new();
    match profile {
        Profile::Tracker {
            tracker: t,
            company_reach,
        } => {
            let _ = writeln!(
                out,
                "{} ({})  {}",
                t.tracker_name, t.tracker_id, report.month
            );
            let _ = writeln!(out, "  company         {}", t.company_id);
            let _ = writeln!(out, "  category        {}", t.category);
            let _ = writeln!(
                out,
                "  reach           {} ({} pages)",
                pct(t.reach),
                t.pages_seen
            );
            let _ = writeln!(
                out,
                "  site reach      {} ({} sites)",
                pct(t.site_reach),
                t.sites_seen
            );
            if let Some(r) = company_reach {
                let _ = writeln!(out, "  company reach   {}", pct(*r));
            }
            let _ = writeln!(
                out,
                "  cookies         {}",
                pct(t.proportion_cookie_context)
            );
            let _ = writeln!(
                out,
                "  fingerprinting  {}",
                pct(t.proportion_fingerprint_context)
            );
            let _ = writeln!(
                out,
                "  tracking        {}",
                pct(t.proportion_tracking_context)
            );
            let _ = writeln!(
                out,
                "  https only      {}",
                pct(t.proportion_secure_context)
            );
            let _ = writeln!(out, "  blocked         {}", pct(t.proportion_blocked));
            let _ = writeln!(out, "  requests/page   {:.2}", t.mean_requests_per_page);
            let _ = writeln!(out, "  content types");
            for (ty, share) in &t.content_type_page_proportions {
                let _ = writeln!(out, "    {:<12} {}", ty.as_str(), pct(*share));
            }
        }
        Profile::Site { site: s } => {
            let _ = writeln!(out, "site {}  {}", s.hostname_digest, report.month);
            let _ = writeln!(out, "  pages                 {}", s.pages);
            let _ = writeln!(
                out,
                "  third parties/page    {:.2}",
                s.avg_third_parties_per_page
            );
            let _ = writeln!(
                out,
                "  trackers/page         {:.2}",
                s.avg_trackers_per_page
            );
            let _ = writeln!(
                out,
                "  pages with tracking   {}",
                pct(s.proportion_pages_with_tracking)
            );
            let _ = writeln!(
                out,
                "  third-party MB/page   {:.3}",
                s.avg_third_party_content_length / 1e6
            );
            let mut mix: Vec<_> = s.category_mix.iter().collect();
            mix.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
            for (cat, n) in mix.into_iter().take(TOP) {
                let _ = writeln!(out, "    {:<22} {:.2}", cat.as_str(), n);
            }
        }
        Profile::Company {
            company: c,
            members,
        } => {
            let _ = writeln!(out, "company {}  {}", c.company_id, report.month);
            let _ = writeln!(
                out,
                "  reach        {} ({} pages)",
                pct(c.reach),
                c.pages_seen
            );
            let _ = writeln!(
                out,
                "  site reach   {} ({} sites)",
                pct(c.site_reach),
                c.sites_seen
            );
            let _ = writeln!(out, "  trackers");
            for t in members.iter().take(TOP) {
                let _ = writeln!(out, "    {:<24} {}", t.tracker_id, pct(t.reach));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackscope_core::aggregate::aggregate_month;
    use trackscope_core::probe::{Protocol, ThirdPartyStats};
    use trackscope_core::sanitize::SanitizedPageLoad;
    use trackscope_core::time::MonthKey;
    use trackscope_core::trackerdb::{Category, TrackerDb, TrackerDbEntry};

    fn report() -> AggregateReport {
        let db = TrackerDb::from_entries(
            "t",
            [TrackerDbEntry {
                pattern: "google-analytics.com".into(),
                tracker_id: "google_analytics".into(),
                tracker_name: "Google Analytics".into(),
                company_id: "google".into(),
                category: Category::SiteAnalytics,
            }],
        )
        .unwrap();
        let mut tp = ThirdPartyStats::new("www.google-analytics.com");
        tp.count_before_request = 1;
        let page = SanitizedPageLoad {
            protocol: Protocol::Https,
            month: MonthKey::new(2018, 4).unwrap(),
            user_country: None,
            hostname_digest: "abcd".into(),
            path_digest: "p".into(),
            third_parties: vec![tp],
        };
        aggregate_month(&[page.clone(), page], &db).unwrap()
    }

    #[test]
    fn profiles() {
        let r = report();
        let p = profile(&r, EntityKind::Tracker, "google_analytics").unwrap();
        let text = render_text(&r, &p);
        assert!(text.contains("reach           100.0%"));
        let p = profile(&r, EntityKind::Company, "google").unwrap();
        assert!(render_text(&r, &p).contains("google_analytics"));
        let json = serde_json::to_value(profile(&r, EntityKind::Site, "abcd").unwrap()).unwrap();
        assert_eq!(json["kind"], "site");
        assert!(matches!(
            profile(&r, EntityKind::Tracker, "nope"),
            Err(CliError::UnknownEntity { .. })
        ));
    }
}
