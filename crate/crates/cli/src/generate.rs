//! Seeded synthetic request-event corpora with a ground-truth sidecar.
//!
//! Pages are spread evenly over each month, one tab per user, so a page's
//! events always finish before the same user's next page starts. Every
//! draw comes from one ChaCha stream seeded by the caller.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trackscope_core::hash::hash_truncated;
use trackscope_core::probe::{Method, RequestEvent, ResourceType, Stage};
use trackscope_core::time::MonthKey;

use crate::config::DEFAULT_GEO;
use crate::formats::geo_country_prefixes;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("{field} must be in [0, 1], got {value}")]
    Probability { field: String, value: f64 },
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("no IPv4 prefix known for country {0:?}")]
    UnknownCountry(String),
    #[error("site index {0} is out of range")]
    SiteOutOfRange(usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Popularity {
    #[default]
    Uniform,
    /// Site `i` (0-based) has weight `1 / (i + 1)^exponent`.
    Zipf { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub value: String,
    pub weight: f64,
}

impl Weighted {
    pub fn new(value: &str, weight: f64) -> Self {
        Self {
            value: value.to_string(),
            weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SitesSpec {
    pub count: usize,
    #[serde(default)]
    pub popularity: Popularity,
    #[serde(default = "default_paths")]
    pub paths_per_site: usize,
}

fn default_paths() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersSpec {
    pub count: usize,
    /// Country mix of users; empty means all `US`.
    #[serde(default)]
    pub countries: Vec<Weighted>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonthSpec {
    pub month: MonthKey,
    pub pages: usize,
    /// Share of pages whose third-party requests all use HTTPS.
    #[serde(default = "one")]
    pub https_share: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeRate {
    #[serde(rename = "type")]
    pub resource_type: ResourceType,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalSpec {
    /// Mean and standard deviation of the natural log of the byte count.
    pub mu: f64,
    pub sigma: f64,
}

impl Default for LogNormalSpec {
    fn default() -> Self {
        // median of e^10.5 ~ 36 kB per request
        Self {
            mu: 10.5,
            sigma: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSpec {
    pub hostname: String,
    /// Per-page inclusion probability on eligible sites.
    pub inclusion: f64,
    /// Eligible site indices; all sites when absent.
    #[serde(default)]
    pub sites: Option<Vec<usize>>,
    #[serde(default)]
    pub cookie_rate: f64,
    /// Chance a page's requests carry a per-user identifier.
    #[serde(default)]
    pub identifier_rate: f64,
    #[serde(default)]
    pub block_rate: f64,
    /// Independent per-page chance of loading each resource type. A page
    /// that draws none loads a single `other` request.
    #[serde(default = "default_types")]
    pub content_types: Vec<TypeRate>,
    #[serde(default)]
    pub server_countries: Vec<Weighted>,
    /// Prefix the hostname with a per-user label.
    #[serde(default)]
    pub per_user_subdomain: bool,
    #[serde(default)]
    pub content_length: Option<LogNormalSpec>,
}

fn default_types() -> Vec<TypeRate> {
    vec![TypeRate {
        resource_type: ResourceType::Script,
        rate: 1.0,
    }]
}

impl TrackerSpec {
    pub fn simple(hostname: &str, inclusion: f64) -> Self {
        Self {
            hostname: hostname.to_string(),
            inclusion,
            sites: None,
            cookie_rate: 0.0,
            identifier_rate: 0.0,
            block_rate: 0.0,
            content_types: default_types(),
            server_countries: Vec::new(),
            per_user_subdomain: false,
            content_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub sites: SitesSpec,
    pub users: UsersSpec,
    pub months: Vec<MonthSpec>,
    #[serde(default)]
    pub trackers: Vec<TrackerSpec>,
    #[serde(default)]
    pub content_length: LogNormalSpec,
}

fn check_p(field: impl Into<String>, value: f64) -> Result<(), SpecError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SpecError::Probability {
            field: field.into(),
            value,
        })
    }
}

impl SyntheticCorpusSpec {
    /// A small mixed corpus exercising every tracker behaviour.
    pub fn demo() -> Self {
        let t = |host: &str, p: f64| TrackerSpec::simple(host, p);
        let rate = |ty: ResourceType, rate: f64| TypeRate {
            resource_type: ty,
            rate,
        };
        let mut ga = t("www.google-analytics.com", 0.46);
        ga.content_types = vec![
            rate(ResourceType::Script, 0.97),
            rate(ResourceType::Image, 0.5),
            rate(ResourceType::Beacon, 0.026),
        ];
        ga.cookie_rate = 0.1;
        ga.identifier_rate = 0.4;
        let mut dc = t("stats.g.doubleclick.net", 0.3);
        dc.cookie_rate = 0.9;
        dc.block_rate = 0.1;
        dc.content_types = vec![rate(ResourceType::Image, 1.0)];
        let mut fb = t("connect.facebook.net", 0.2);
        fb.cookie_rate = 0.6;
        fb.server_countries = vec![Weighted::new("US", 0.7), Weighted::new("IE", 0.3)];
        let mut nr = t("d1ros97qkrwjf5.cloudfront.net", 0.1);
        nr.content_types = vec![
            rate(ResourceType::Script, 1.0),
            rate(ResourceType::Xhr, 0.8),
        ];
        let mut mitm = t("eluxer.net", 0.02);
        mitm.per_user_subdomain = true;
        mitm.identifier_rate = 1.0;
        let mut dp = t("ads.doublepimp.com", 0.9);
        dp.sites = Some(vec![0]);
        dp.block_rate = 0.3;
        Self {
            sites: SitesSpec {
                count: 40,
                popularity: Popularity::Zipf { exponent: 1.0 },
                paths_per_site: 8,
            },
            users: UsersSpec {
                count: 60,
                countries: vec![
                    Weighted::new("US", 0.4),
                    Weighted::new("DE", 0.3),
                    Weighted::new("RU", 0.2),
                    Weighted::new("FR", 0.1),
                ],
            },
            months: vec![
                MonthSpec {
                    month: MonthKey::new(2018, 4).expect("valid month"),
                    pages: 1500,
                    https_share: 0.6,
                },
                MonthSpec {
                    month: MonthKey::new(2018, 5).expect("valid month"),
                    pages: 1500,
                    https_share: 0.7,
                },
            ],
            trackers: vec![
                ga,
                dc,
                fb,
                nr,
                mitm,
                dp,
                t("cdn.unlisted-widgets.org", 0.05),
            ],
            content_length: LogNormalSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.sites.count == 0 {
            return Err(SpecError::Zero("sites.count"));
        }
        if self.sites.paths_per_site == 0 {
            return Err(SpecError::Zero("sites.paths_per_site"));
        }
        if self.users.count == 0 {
            return Err(SpecError::Zero("users.count"));
        }
        if self.months.is_empty() {
            return Err(SpecError::Zero("months"));
        }
        for m in &self.months {
            check_p(format!("months[{}].https_share", m.month), m.https_share)?;
            let max_pages = m.month.days() as usize * 86_400;
            if m.pages > max_pages {
                return Err(SpecError::Invalid(format!(
                    "{} pages do not fit in {}",
                    m.pages, m.month
                )));
            }
        }
        if let Popularity::Zipf { exponent } = self.sites.popularity {
            if !(exponent.is_finite() && exponent >= 0.0) {
                return Err(SpecError::Invalid("zipf exponent must be >= 0".into()));
            }
        }
        for tr in &self.trackers {
            let name = &tr.hostname;
            check_p(format!("{name}.inclusion"), tr.inclusion)?;
            check_p(format!("{name}.cookie_rate"), tr.cookie_rate)?;
            check_p(format!("{name}.identifier_rate"), tr.identifier_rate)?;
            check_p(format!("{name}.block_rate"), tr.block_rate)?;
            for r in &tr.content_types {
                check_p(format!("{name}.content_types"), r.rate)?;
            }
            if let Some(sites) = &tr.sites {
                if let Some(bad) = sites.iter().find(|s| **s >= self.sites.count) {
                    return Err(SpecError::SiteOutOfRange(*bad));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthTruth {
    pub month: MonthKey,
    pub pages: usize,
    /// Pages assigned all-HTTPS third parties by the schedule.
    pub scheduled_secure_pages: usize,
    /// Pages whose third-party requests all used HTTPS, including pages
    /// with no third parties.
    pub secure_pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerTruth {
    pub hostname: String,
    pub pages: usize,
    pub sites: usize,
}

/// Sidecar written next to a generated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub spec: SyntheticCorpusSpec,
    pub total_pages: usize,
    pub site_hostnames: Vec<String>,
    pub months: Vec<MonthTruth>,
    pub trackers: Vec<TrackerTruth>,
}

pub struct Generated {
    pub events: Vec<RequestEvent>,
    pub truth: GroundTruth,
}

const SITE_TLDS: [&str; 5] = ["com", "co.uk", "de", "fr", "net"];
const SECTIONS: [&str; 6] = ["news", "sport", "user", "shop", "video", "blog"];

fn site_hostname(i: usize) -> String {
    format!("www.site{i}.{}", SITE_TLDS[i % SITE_TLDS.len()])
}

fn type_path(ty: ResourceType) -> &'static str {
    match ty {
        ResourceType::Script => "js/tag.js",
        ResourceType::Image => "px.gif",
        ResourceType::Beacon => "collect",
        ResourceType::Xhr => "api/v1/events",
        ResourceType::Stylesheet => "css/widget.css",
        ResourceType::Font => "fonts/w.woff2",
        ResourceType::SubFrame => "frame.html",
        ResourceType::Media => "media/clip.mp4",
        _ => "r",
    }
}

struct IpPool {
    prefixes: BTreeMap<String, (u32, u32)>,
}

impl IpPool {
    fn bundled() -> Self {
        let prefixes = geo_country_prefixes(DEFAULT_GEO)
            .into_iter()
            .filter_map(|(country, prefix)| {
                let (addr, len) = prefix.split_once('/')?;
                let base = u32::from(addr.parse::<Ipv4Addr>().ok()?);
                let len: u32 = len.parse().ok()?;
                let host_bits = 32 - len.min(32);
                Some((country, (base, host_bits)))
            })
            .collect();
        Self { prefixes }
    }

    fn check(&self, country: &str) -> Result<(), SpecError> {
        if self.prefixes.contains_key(country) {
            Ok(())
        } else {
            Err(SpecError::UnknownCountry(country.to_string()))
        }
    }

    fn address(&self, country: &str, rng: &mut impl Rng) -> String {
        let (base, host_bits) = self.prefixes[country];
        let span = if host_bits >= 32 {
            u32::MAX
        } else {
            (1u32 << host_bits) - 1
        };
        let offset = if span == 0 {
            0
        } else {
            rng.random_range(1..=span.max(1))
        };
        Ipv4Addr::from(base | (offset & span)).to_string()
    }
}

fn weighted_index(items: &[Weighted], what: &str) -> Result<Option<WeightedIndex<f64>>, SpecError> {
    if items.is_empty() {
        return Ok(None);
    }
    WeightedIndex::new(items.iter().map(|w| w.weight))
        .map(Some)
        .map_err(|e| SpecError::Invalid(format!("{what} weights: {e}")))
}

struct Emitter {
    events: Vec<RequestEvent>,
    next_request: u64,
}

impl Emitter {
    fn push(&mut self, mut ev: RequestEvent, client: &str) {
        ev.client_id = Some(client.to_string());
        self.events.push(ev);
    }

    fn request_id(&mut self) -> u64 {
        self.next_request += 1;
        self.next_request
    }
}

/// Generates the event log and its ground truth.
pub fn generate(spec: &SyntheticCorpusSpec, seed: u64) -> Result<Generated, SpecError> {
    spec.validate()?;
    let pool = IpPool::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let user_countries: Vec<Weighted> = if spec.users.countries.is_empty() {
        vec![Weighted::new("US", 1.0)]
    } else {
        spec.users.countries.clone()
    };
    let user_dist = weighted_index(&user_countries, "users.countries")?
        .ok_or(SpecError::Zero("users.countries"))?;
    let users: Vec<String> = (0..spec.users.count)
        .map(|_| {
            user_countries[user_dist.sample(&mut rng)]
                .value
                .to_ascii_uppercase()
        })
        .collect();

    let site_weights: Vec<f64> = (0..spec.sites.count)
        .map(|i| match spec.sites.popularity {
            Popularity::Uniform => 1.0,
            Popularity::Zipf { exponent } => 1.0 / ((i + 1) as f64).powf(exponent),
        })
        .collect();
    let site_dist = WeightedIndex::new(&site_weights)
        .map_err(|e| SpecError::Invalid(format!("site weights: {e}")))?;
    let sites: Vec<String> = (0..spec.sites.count).map(site_hostname).collect();

    struct Prepared<'a> {
        spec: &'a TrackerSpec,
        eligible: Option<Vec<bool>>,
        countries: Vec<Weighted>,
        country_dist: WeightedIndex<f64>,
        lengths: LogNormal<f64>,
    }
    let mut trackers = Vec::new();
    for tr in &spec.trackers {
        let countries = if tr.server_countries.is_empty() {
            vec![Weighted::new("US", 1.0)]
        } else {
            tr.server_countries.clone()
        };
        for c in &countries {
            pool.check(&c.value.to_ascii_uppercase())?;
        }
        let country_dist =
            weighted_index(&countries, &tr.hostname)?.ok_or(SpecError::Zero("server_countries"))?;
        let ln = tr.content_length.unwrap_or(spec.content_length);
        let lengths = LogNormal::new(ln.mu, ln.sigma)
            .map_err(|e| SpecError::Invalid(format!("{} content length: {e}", tr.hostname)))?;
        let eligible = tr.sites.as_ref().map(|list| {
            let mut mask = vec![false; spec.sites.count];
            for s in list {
                mask[*s] = true;
            }
            mask
        });
        trackers.push(Prepared {
            spec: tr,
            eligible,
            countries,
            country_dist,
            lengths,
        });
    }

    let mut out = Emitter {
        events: Vec::new(),
        next_request: 0,
    };
    let mut month_truth = Vec::new();
    let mut tracker_pages = vec![0usize; trackers.len()];
    let mut tracker_sites = vec![std::collections::BTreeSet::new(); trackers.len()];
    let mut total_pages = 0;

    for m in &spec.months {
        let scheduled = (m.https_share * m.pages as f64).round() as usize;
        let mut secure_plan: Vec<bool> = (0..m.pages).map(|i| i < scheduled).collect();
        secure_plan.shuffle(&mut rng);
        let spacing = (m.month.days() * 86_400_000) / m.pages.max(1) as i64;
        let mut secure_pages = 0;

        for (j, secure) in secure_plan.into_iter().enumerate() {
            total_pages += 1;
            let mut ts = m.month.start_ms() + j as i64 * spacing;
            let user = rng.random_range(0..spec.users.count);
            let client = format!("user-{user}");
            let tab = user as u64;
            let site = site_dist.sample(&mut rng);
            let host = &sites[site];
            let path = format!(
                "/{}/item{}",
                SECTIONS[site % SECTIONS.len()],
                rng.random_range(0..spec.sites.paths_per_site)
            );
            let scheme = if secure { "https" } else { "http" };

            let rid = out.request_id();
            let mut main = RequestEvent::new(
                Stage::BeforeRequest,
                tab,
                rid,
                ts,
                &format!("{scheme}://{host}{path}"),
            );
            main.resource_type = ResourceType::MainFrame;
            main.client_country = Some(users[user].clone());
            out.push(main, &client);
            ts += 1;

            let rid = out.request_id();
            let mut css = RequestEvent::new(
                Stage::BeforeRequest,
                tab,
                rid,
                ts,
                &format!("{scheme}://{host}/static/site.css"),
            );
            css.resource_type = ResourceType::Stylesheet;
            out.push(css, &client);
            ts += 1;

            let mut any_third_party = false;
            for (ti, tr) in trackers.iter().enumerate() {
                if tr.eligible.as_ref().is_some_and(|mask| !mask[site]) {
                    continue;
                }
                if !rng.random_bool(tr.spec.inclusion) {
                    continue;
                }
                any_third_party = true;
                tracker_pages[ti] += 1;
                tracker_sites[ti].insert(site);
                let cookies = rng.random_bool(tr.spec.cookie_rate);
                let identify = rng.random_bool(tr.spec.identifier_rate);
                let blocked = rng.random_bool(tr.spec.block_rate);
                let country = tr.countries[tr.country_dist.sample(&mut rng)]
                    .value
                    .to_ascii_uppercase();
                let mut types: Vec<ResourceType> = tr
                    .spec
                    .content_types
                    .iter()
                    .filter(|r| rng.random_bool(r.rate))
                    .map(|r| r.resource_type)
                    .collect();
                if types.is_empty() {
                    types.push(ResourceType::Other);
                }
                let tp_host = if tr.spec.per_user_subdomain {
                    let label = &hash_truncated(&client)[..10];
                    format!("u{label}.{}", tr.spec.hostname)
                } else {
                    tr.spec.hostname.clone()
                };
                for (k, ty) in types.into_iter().enumerate() {
                    let mut url = format!("{scheme}://{tp_host}/{}?v=1&lang=en", type_path(ty));
                    if identify {
                        url.push_str(&format!(
                            "&uid={}",
                            hash_truncated(&format!("{client}/uid"))
                        ));
                    }
                    let rid = out.request_id();
                    let mut br = RequestEvent::new(Stage::BeforeRequest, tab, rid, ts, &url);
                    br.resource_type = ty;
                    br.method = if ty == ResourceType::Beacon {
                        Method::Post
                    } else {
                        Method::Get
                    };
                    br.blocked_by_host_extension = blocked;
                    out.push(br, &client);
                    ts += 1;
                    if blocked {
                        continue;
                    }
                    let mut bsh = RequestEvent::new(Stage::BeforeSendHeaders, tab, rid, ts, &url);
                    bsh.resource_type = ty;
                    bsh.cookies_sent = Some(cookies);
                    out.push(bsh, &client);
                    ts += 1;
                    let mut hr = RequestEvent::new(Stage::HeadersReceived, tab, rid, ts, &url);
                    hr.resource_type = ty;
                    hr.status_code = Some(200);
                    hr.content_length = Some(tr.lengths.sample(&mut rng).round() as u64);
                    hr.from_cache = Some(false);
                    hr.set_cookie = Some(cookies && k == 0);
                    hr.server_ip = Some(pool.address(&country, &mut rng));
                    out.push(hr, &client);
                    ts += 1;
                }
            }
            if secure || !any_third_party {
                secure_pages += 1;
            }
        }
        month_truth.push(MonthTruth {
            month: m.month,
            pages: m.pages,
            scheduled_secure_pages: scheduled,
            secure_pages,
        });
    }

    let truth = GroundTruth {
        seed,
        spec: spec.clone(),
        total_pages,
        site_hostnames: sites,
        months: month_truth,
        trackers: trackers
            .iter()
            .enumerate()
            .map(|(i, t)| TrackerTruth {
                hostname: t.spec.hostname.clone(),
                pages: tracker_pages[i],
                sites: tracker_sites[i].len(),
            })
            .collect(),
    };
    Ok(Generated {
        events: out.events,
        truth,
    })
}
