//! Page-load assembly from browser request events.
//!
//! A page load opens with a `main_frame` request in a tab and closes when
//! the next `main_frame` request arrives for that tab or the tab closes.
//! Every other request in between is checked against the page's
//! registrable domain; third-party requests feed a per-hostname counter
//! bundle at each of the three observed request stages.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{parse_url, site_key, DomainError, ParsedUrl, Scheme, SuffixList};
use crate::geo::{GeoError, GeoTable};
use crate::quorum::QuorumStore;

/// Version tag of the newline-delimited event schema.
pub const EVENT_SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BeforeRequest,
    BeforeSendHeaders,
    HeadersReceived,
    /// Synthetic signal closing the tab's open page load.
    TabClosed,
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ResourceType {
    MainFrame,
    SubFrame,
    Script,
    Image,
    Stylesheet,
    Font,
    Xhr,
    Beacon,
    Plugin,
    Media,
    #[default]
    Other,
}

impl ResourceType {
    pub const ALL: [ResourceType; 11] = [
        ResourceType::MainFrame,
        ResourceType::SubFrame,
        ResourceType::Script,
        ResourceType::Image,
        ResourceType::Stylesheet,
        ResourceType::Font,
        ResourceType::Xhr,
        ResourceType::Beacon,
        ResourceType::Plugin,
        ResourceType::Media,
        ResourceType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ResourceType::MainFrame => "main_frame",
            ResourceType::SubFrame => "sub_frame",
            ResourceType::Script => "script",
            ResourceType::Image => "image",
            ResourceType::Stylesheet => "stylesheet",
            ResourceType::Font => "font",
            ResourceType::Xhr => "xhr",
            ResourceType::Beacon => "beacon",
            ResourceType::Plugin => "plugin",
            ResourceType::Media => "media",
            ResourceType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GET")]
    #[default]
    Get,
    #[serde(rename = "POST")]
    Post,
    #[serde(rename = "other")]
    Other,
}

/// One observed browser request at one lifecycle stage.
///
/// Response fields (`status_code`, `content_length`, `server_ip`) belong to
/// `headers_received`, `cookies_sent` to `before_send_headers`. `client_id`
/// names the simulated browser instance (quorum observer and transport
/// sender); `client_country` annotates `main_frame` events with the user's
/// country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub stage: Stage,
    pub tab_id: u64,
    #[serde(default)]
    pub request_id: u64,
    pub timestamp: i64,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub resource_type: ResourceType,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub is_main_frame_context: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cookies_sent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status_code: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_cache: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_cookie: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_ip: Option<String>,
    #[serde(default)]
    pub blocked_by_host_extension: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_country: Option<String>,
}

impl RequestEvent {
    /// Minimal event; stage-specific fields are left empty.
    pub fn new(stage: Stage, tab_id: u64, request_id: u64, timestamp: i64, url: &str) -> Self {
        Self {
            stage,
            tab_id,
            request_id,
            timestamp,
            url: url.to_string(),
            resource_type: ResourceType::Other,
            method: Method::Get,
            is_main_frame_context: true,
            cookies_sent: None,
            status_code: None,
            content_length: None,
            from_cache: None,
            set_cookie: None,
            server_ip: None,
            blocked_by_host_extension: false,
            client_id: None,
            client_country: None,
        }
    }

    /// Checks that stage-specific fields only appear at their stage.
    pub fn validate(&self) -> Result<(), ProbeError> {
        let misplaced = |field: &'static str| ProbeError::MisplacedField {
            field,
            stage: self.stage,
        };
        if self.stage != Stage::BeforeSendHeaders && self.cookies_sent.is_some() {
            return Err(misplaced("cookies_sent"));
        }
        if self.stage != Stage::HeadersReceived {
            if self.status_code.is_some() {
                return Err(misplaced("status_code"));
            }
            if self.content_length.is_some() {
                return Err(misplaced("content_length"));
            }
            if self.server_ip.is_some() {
                return Err(misplaced("server_ip"));
            }
        }
        Ok(())
    }

    fn tab_key(&self) -> TabKey {
        (self.client_id.clone().unwrap_or_default(), self.tab_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProbeError {
    #[error("request {request_id} reached {stage:?} before before_request")]
    StageOrderViolation { request_id: u64, stage: Stage },
    #[error("field {field} is not allowed at stage {stage:?}")]
    MisplacedField { field: &'static str, stage: Stage },
    #[error("expected a main_frame before_request event")]
    NotPageStart,
    #[error("main_frame events open page loads and cannot be recorded into one")]
    UnexpectedMainFrame,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatusClass {
    #[serde(rename = "2xx")]
    Success,
    #[serde(rename = "3xx")]
    Redirect,
    #[serde(rename = "4xx")]
    ClientError,
    #[serde(rename = "5xx")]
    ServerError,
    #[serde(rename = "other")]
    Other,
}

impl StatusClass {
    pub fn of(code: u16) -> Self {
        match code {
            200..=299 => StatusClass::Success,
            300..=399 => StatusClass::Redirect,
            400..=499 => StatusClass::ClientError,
            500..=599 => StatusClass::ServerError,
            _ => StatusClass::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCounts {
    pub get: u64,
    pub post: u64,
}

/// Counter bundle for one third-party hostname within one page load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThirdPartyStats {
    pub hostname: String,
    pub count_before_request: u64,
    pub count_headers_received: u64,
    pub count_blocked: u64,
    pub methods: MethodCounts,
    pub has_url_data: u64,
    pub scheme_http: u64,
    pub scheme_https: u64,
    pub main_frame: u64,
    pub sub_frame: u64,
    pub content_types: BTreeMap<ResourceType, u64>,
    pub unsafe_identifier: u64,
    pub cookies_sent: u64,
    pub set_cookie: u64,
    pub status_classes: BTreeMap<StatusClass, u64>,
    pub content_length_sum: u64,
    pub from_cache: u64,
    pub response_countries: BTreeMap<String, u64>,
}

fn add_maps<K: Ord + Clone>(into: &mut BTreeMap<K, u64>, from: &BTreeMap<K, u64>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

impl ThirdPartyStats {
    pub fn new(hostname: impl Into<String>) -> Self {
        Self {
            hostname: hostname.into(),
            ..Self::default()
        }
    }

    /// Counter-wise addition; the hostname is left untouched.
    pub fn merge(&mut self, other: &ThirdPartyStats) {
        self.count_before_request += other.count_before_request;
        self.count_headers_received += other.count_headers_received;
        self.count_blocked += other.count_blocked;
        self.methods.get += other.methods.get;
        self.methods.post += other.methods.post;
        self.has_url_data += other.has_url_data;
        self.scheme_http += other.scheme_http;
        self.scheme_https += other.scheme_https;
        self.main_frame += other.main_frame;
        self.sub_frame += other.sub_frame;
        add_maps(&mut self.content_types, &other.content_types);
        self.unsafe_identifier += other.unsafe_identifier;
        self.cookies_sent += other.cookies_sent;
        self.set_cookie += other.set_cookie;
        add_maps(&mut self.status_classes, &other.status_classes);
        self.content_length_sum += other.content_length_sum;
        self.from_cache += other.from_cache;
        add_maps(&mut self.response_countries, &other.response_countries);
    }

    /// Requests that never got a response and were not blocked by the host
    /// extension: evidence of blocking elsewhere (network, other extension).
    pub fn external_block_signal(&self) -> u64 {
        self.count_before_request
            .saturating_sub(self.count_headers_received)
            .saturating_sub(self.count_blocked)
    }

    pub fn was_blocked(&self) -> bool {
        self.count_blocked + self.external_block_signal() > 0
    }

    pub fn cookie_context(&self) -> bool {
        self.cookies_sent + self.set_cookie > 0
    }

    pub fn fingerprint_context(&self) -> bool {
        self.unsafe_identifier > 0
    }

    pub fn tracking_context(&self) -> bool {
        self.cookie_context() || self.fingerprint_context()
    }

    pub fn all_secure(&self) -> bool {
        self.scheme_http == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Http,
    Https,
}

/// A closed page load: protocol, first-party hostname and path (raw until
/// sanitized) and the third parties contacted, ordered by hostname.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageLoadRecord {
    pub protocol: Protocol,
    pub hostname: String,
    pub path: String,
    pub started_at: i64,
    pub third_parties: Vec<ThirdPartyStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_country: Option<String>,
}

/// Lookup tables the probe consults while recording events.
#[derive(Clone, Copy)]
pub struct ProbeContext<'a> {
    pub suffixes: &'a SuffixList,
    pub geo: &'a GeoTable,
    pub quorum: &'a QuorumStore,
}

#[derive(Debug, Clone)]
struct RequestState {
    hostname: String,
    third_party: bool,
    responded: bool,
}

/// An open page load accumulating events.
#[derive(Debug, Clone)]
pub struct PageLoad {
    protocol: Protocol,
    hostname: String,
    site: Option<String>,
    path: String,
    started_at: i64,
    client_id: Option<String>,
    user_country: Option<String>,
    third_parties: BTreeMap<String, ThirdPartyStats>,
    requests: BTreeMap<u64, RequestState>,
}

impl PageLoad {
    /// Opens a page load from a `main_frame` `before_request` event.
    /// Returns `Ok(None)` for navigations to non-HTTP(S) schemes.
    pub fn open(ev: &RequestEvent) -> Result<Option<Self>, ProbeError> {
        if ev.resource_type != ResourceType::MainFrame || ev.stage != Stage::BeforeRequest {
            return Err(ProbeError::NotPageStart);
        }
        let url = parse_url(&ev.url)?;
        let protocol = match url.scheme {
            Scheme::Http => Protocol::Http,
            Scheme::Https => Protocol::Https,
            Scheme::Other(_) => return Ok(None),
        };
        Ok(Some(Self {
            protocol,
            hostname: url.hostname,
            site: None,
            path: url.path,
            started_at: ev.timestamp,
            client_id: ev.client_id.clone(),
            user_country: ev.client_country.clone(),
            third_parties: BTreeMap::new(),
            requests: BTreeMap::new(),
        }))
    }

    pub fn hostname(&self) -> &str {
        &self.hostname
    }

    /// Records a non-`main_frame` event. First-party requests are tracked
    /// for stage ordering but contribute no counters.
    pub fn record_event(
        &mut self,
        ev: &RequestEvent,
        ctx: &ProbeContext<'_>,
    ) -> Result<(), ProbeError> {
        if ev.resource_type == ResourceType::MainFrame {
            return Err(ProbeError::UnexpectedMainFrame);
        }
        ev.validate()?;
        match ev.stage {
            Stage::BeforeRequest => self.before_request(ev, ctx),
            Stage::BeforeSendHeaders => {
                let state = self.known_request(ev)?;
                if state.third_party && ev.cookies_sent == Some(true) {
                    let host = state.hostname.clone();
                    self.stats(&host).cookies_sent += 1;
                }
                Ok(())
            }
            Stage::HeadersReceived => self.headers_received(ev, ctx),
            Stage::TabClosed => Ok(()),
        }
    }

    fn known_request(&self, ev: &RequestEvent) -> Result<&RequestState, ProbeError> {
        self.requests
            .get(&ev.request_id)
            .ok_or(ProbeError::StageOrderViolation {
                request_id: ev.request_id,
                stage: ev.stage,
            })
    }

    fn stats(&mut self, hostname: &str) -> &mut ThirdPartyStats {
        self.third_parties
            .entry(hostname.to_string())
            .or_insert_with(|| ThirdPartyStats::new(hostname))
    }

    fn before_request(
        &mut self,
        ev: &RequestEvent,
        ctx: &ProbeContext<'_>,
    ) -> Result<(), ProbeError> {
        let url = parse_url(&ev.url)?;
        let site = self
            .site
            .get_or_insert_with(|| site_key(&self.hostname, ctx.suffixes))
            .clone();
        let third_party = site_key(&url.hostname, ctx.suffixes) != site;
        self.requests.insert(
            ev.request_id,
            RequestState {
                hostname: url.hostname.clone(),
                third_party,
                responded: false,
            },
        );
        if !third_party {
            return Ok(());
        }
        let unsafe_identifier = ctx.quorum.classify_request(&url);
        let stats = self.stats(&url.hostname);
        count_request(stats, ev, &url, unsafe_identifier);
        Ok(())
    }

    fn headers_received(
        &mut self,
        ev: &RequestEvent,
        ctx: &ProbeContext<'_>,
    ) -> Result<(), ProbeError> {
        let state = self.known_request(ev)?;
        if !state.third_party || state.responded {
            return Ok(());
        }
        let host = state.hostname.clone();
        let country = match &ev.server_ip {
            Some(ip) => Some(ctx.geo.resolve_country(ip)?.to_string()),
            None => None,
        };
        if let Some(state) = self.requests.get_mut(&ev.request_id) {
            state.responded = true;
        }
        let stats = self.stats(&host);
        stats.count_headers_received += 1;
        if let Some(code) = ev.status_code {
            *stats
                .status_classes
                .entry(StatusClass::of(code))
                .or_default() += 1;
        }
        stats.content_length_sum += ev.content_length.unwrap_or(0);
        stats.from_cache += u64::from(ev.from_cache == Some(true));
        stats.set_cookie += u64::from(ev.set_cookie == Some(true));
        if let Some(country) = country {
            *stats.response_countries.entry(country).or_default() += 1;
        }
        Ok(())
    }

    pub fn close(self) -> PageLoadRecord {
        PageLoadRecord {
            protocol: self.protocol,
            hostname: self.hostname,
            path: self.path,
            started_at: self.started_at,
            third_parties: self.third_parties.into_values().collect(),
            client_id: self.client_id,
            user_country: self.user_country,
        }
    }
}

fn count_request(
    stats: &mut ThirdPartyStats,
    ev: &RequestEvent,
    url: &ParsedUrl,
    unsafe_identifier: bool,
) {
    stats.count_before_request += 1;
    match ev.method {
        Method::Get => stats.methods.get += 1,
        Method::Post => stats.methods.post += 1,
        Method::Other => {}
    }
    match url.scheme {
        Scheme::Http => stats.scheme_http += 1,
        Scheme::Https => stats.scheme_https += 1,
        Scheme::Other(_) => {}
    }
    if ev.is_main_frame_context {
        stats.main_frame += 1;
    } else {
        stats.sub_frame += 1;
    }
    // Blocked requests still count towards content types: the intent to
    // load existed.
    *stats.content_types.entry(ev.resource_type).or_default() += 1;
    stats.has_url_data += u64::from(url.carries_url_data());
    stats.unsafe_identifier += u64::from(unsafe_identifier);
    stats.count_blocked += u64::from(ev.blocked_by_host_extension);
}

type TabKey = (String, u64);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeCounters {
    pub events: u64,
    pub pages_opened: u64,
    /// Events for a tab with no open page load.
    pub dropped_orphans: u64,
    /// Navigations to schemes other than http/https.
    pub skipped_navigations: u64,
}

/// Routes events to per-tab page loads and emits closed records.
pub struct Probe<'a> {
    ctx: ProbeContext<'a>,
    open: BTreeMap<TabKey, PageLoad>,
    counters: ProbeCounters,
}

impl<'a> Probe<'a> {
    pub fn new(ctx: ProbeContext<'a>) -> Self {
        Self {
            ctx,
            open: BTreeMap::new(),
            counters: ProbeCounters::default(),
        }
    }

    pub fn counters(&self) -> ProbeCounters {
        self.counters
    }

    /// Switches to another quorum window's store for subsequent events.
    pub fn set_quorum(&mut self, quorum: &'a QuorumStore) {
        self.ctx.quorum = quorum;
    }

    /// Feeds one event; returns the page load it closed, if any.
    pub fn ingest(&mut self, ev: &RequestEvent) -> Result<Option<PageLoadRecord>, ProbeError> {
        self.counters.events += 1;
        let key = ev.tab_key();
        if ev.stage == Stage::TabClosed {
            return Ok(self.open.remove(&key).map(PageLoad::close));
        }
        if ev.resource_type == ResourceType::MainFrame {
            if ev.stage != Stage::BeforeRequest {
                return Ok(None);
            }
            let closed = self.open.remove(&key).map(PageLoad::close);
            match PageLoad::open(ev)? {
                Some(page) => {
                    self.counters.pages_opened += 1;
                    self.open.insert(key, page);
                }
                None => self.counters.skipped_navigations += 1,
            }
            return Ok(closed);
        }
        match self.open.get_mut(&key) {
            Some(page) => {
                page.record_event(ev, &self.ctx)?;
                Ok(None)
            }
            None => {
                self.counters.dropped_orphans += 1;
                Ok(None)
            }
        }
    }

    /// Closes every still-open page load, in tab order.
    pub fn finish(self) -> (Vec<PageLoadRecord>, ProbeCounters) {
        let pages = self.open.into_values().map(PageLoad::close).collect();
        (pages, self.counters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quorum::QuorumConfig;
    use alloc::vec;

    struct Fixture {
        suffixes: SuffixList,
        geo: GeoTable,
        quorum: QuorumStore,
    }

    impl Fixture {
        fn new() -> Self {
            let mut geo = GeoTable::new();
            geo.insert("198.51.100.0/24", "US").unwrap();
            geo.insert("2001:db8::/32", "DE").unwrap();
            Self {
                suffixes: SuffixList::parse("com\nfr\nnet\nexample\n", "test"),
                geo,
                quorum: QuorumStore::new(QuorumConfig::default()),
            }
        }

        fn ctx(&self) -> ProbeContext<'_> {
            ProbeContext {
                suffixes: &self.suffixes,
                geo: &self.geo,
                quorum: &self.quorum,
            }
        }
    }

    fn main_frame(tab: u64, t: i64, url: &str) -> RequestEvent {
        let mut ev = RequestEvent::new(Stage::BeforeRequest, tab, t as u64 * 1000, t, url);
        ev.resource_type = ResourceType::MainFrame;
        ev
    }

    fn sub(stage: Stage, tab: u64, req: u64, url: &str, rt: ResourceType) -> RequestEvent {
        let mut ev = RequestEvent::new(stage, tab, req, 10, url);
        ev.resource_type = rt;
        ev
    }

    #[test]
    fn opens_record() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        assert!(probe
            .ingest(&main_frame(7, 1, "https://example.com/news"))
            .unwrap()
            .is_none());
        let (pages, counters) = probe.finish();
        assert_eq!(counters.pages_opened, 1);
        assert_eq!(
            pages,
            vec![PageLoadRecord {
                protocol: Protocol::Https,
                hostname: "example.com".into(),
                path: "/news".into(),
                started_at: 1,
                third_parties: vec![],
                client_id: None,
                user_country: None,
            }]
        );
    }

    #[test]
    fn next_main_frame_or_tab_close_emits() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(7, 1, "https://example.com/a"))
            .unwrap();
        let first = probe
            .ingest(&main_frame(7, 2, "https://example.com/b"))
            .unwrap();
        assert_eq!(first.unwrap().path, "/a");
        let mut close = RequestEvent::new(Stage::TabClosed, 7, 0, 3, "");
        close.is_main_frame_context = false;
        let second = probe.ingest(&close).unwrap();
        assert_eq!(second.unwrap().path, "/b");
        assert!(probe.finish().0.is_empty());
    }

    #[test]
    fn counts_script_with_cookies() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(1, 1, "https://lemonde.fr/"))
            .unwrap();
        let url = "https://google-analytics.com/analytics.js";
        probe
            .ingest(&sub(Stage::BeforeRequest, 1, 5, url, ResourceType::Script))
            .unwrap();
        let mut headers = sub(Stage::BeforeSendHeaders, 1, 5, url, ResourceType::Script);
        headers.cookies_sent = Some(true);
        probe.ingest(&headers).unwrap();
        let (pages, _) = probe.finish();
        let tp = &pages[0].third_parties[0];
        let mut expected = ThirdPartyStats::new("google-analytics.com");
        expected.count_before_request = 1;
        expected.methods.get = 1;
        expected.scheme_https = 1;
        expected.main_frame = 1;
        expected.content_types.insert(ResourceType::Script, 1);
        expected.cookies_sent = 1;
        assert_eq!(tp, &expected);
    }

    #[test]
    fn beacon_with_unique_identifier() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(1, 1, "https://lemonde.fr/"))
            .unwrap();
        let mut ev = sub(
            Stage::BeforeRequest,
            1,
            9,
            "https://tracker.example/collect?uid=f3a9c2e17b",
            ResourceType::Beacon,
        );
        ev.method = Method::Post;
        probe.ingest(&ev).unwrap();
        let (pages, _) = probe.finish();
        let tp = &pages[0].third_parties[0];
        assert_eq!(tp.has_url_data, 1);
        assert_eq!(tp.unsafe_identifier, 1);
        assert_eq!(tp.methods.post, 1);
        assert_eq!(tp.content_types[&ResourceType::Beacon], 1);
    }

    #[test]
    fn blocked_request_gets_no_response() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(1, 1, "https://lemonde.fr/"))
            .unwrap();
        let mut ev = sub(
            Stage::BeforeRequest,
            1,
            3,
            "https://ads.example/x.gif",
            ResourceType::Image,
        );
        ev.blocked_by_host_extension = true;
        probe.ingest(&ev).unwrap();
        let tp = &probe.finish().0[0].third_parties[0];
        assert_eq!(
            (
                tp.count_before_request,
                tp.count_blocked,
                tp.count_headers_received
            ),
            (1, 1, 0)
        );
        assert_eq!(tp.external_block_signal(), 0);
        assert!(tp.was_blocked());
    }

    #[test]
    fn response_counters_and_geo() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(1, 1, "http://lemonde.fr/"))
            .unwrap();
        for (req, ip) in [(1, "198.51.100.7"), (2, "2001:db8::1"), (3, "192.0.2.1")] {
            let url = "http://cdn.tracker.example/p.js";
            probe
                .ingest(&sub(
                    Stage::BeforeRequest,
                    1,
                    req,
                    url,
                    ResourceType::Script,
                ))
                .unwrap();
            let mut resp = sub(Stage::HeadersReceived, 1, req, url, ResourceType::Script);
            resp.status_code = Some(if req == 3 { 404 } else { 200 });
            resp.content_length = Some(1000 * req);
            resp.set_cookie = Some(req == 1);
            resp.from_cache = Some(req == 2);
            resp.server_ip = Some(ip.into());
            probe.ingest(&resp).unwrap();
        }
        let tp = &probe.finish().0[0].third_parties[0];
        assert_eq!(tp.count_headers_received, 3);
        assert_eq!(tp.scheme_http, 3);
        assert_eq!(tp.content_length_sum, 6000);
        assert_eq!(tp.set_cookie, 1);
        assert_eq!(tp.from_cache, 1);
        assert_eq!(tp.status_classes[&StatusClass::Success], 2);
        assert_eq!(tp.status_classes[&StatusClass::ClientError], 1);
        assert_eq!(tp.response_countries["US"], 1);
        assert_eq!(tp.response_countries["DE"], 1);
        assert_eq!(tp.response_countries["--"], 1);
    }

    #[test]
    fn first_party_requests_are_ignored() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(1, 1, "https://www.example.com/"))
            .unwrap();
        probe
            .ingest(&sub(
                Stage::BeforeRequest,
                1,
                2,
                "https://cdn.example.com/a.js",
                ResourceType::Script,
            ))
            .unwrap();
        assert!(probe.finish().0[0].third_parties.is_empty());
    }

    #[test]
    fn stage_order_violation() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&main_frame(1, 1, "https://lemonde.fr/"))
            .unwrap();
        let resp = sub(
            Stage::HeadersReceived,
            1,
            77,
            "https://t.example/",
            ResourceType::Xhr,
        );
        assert_eq!(
            probe.ingest(&resp),
            Err(ProbeError::StageOrderViolation {
                request_id: 77,
                stage: Stage::HeadersReceived
            })
        );
    }

    #[test]
    fn orphans_are_dropped_and_counted() {
        let fx = Fixture::new();
        let mut probe = Probe::new(fx.ctx());
        probe
            .ingest(&sub(
                Stage::BeforeRequest,
                4,
                1,
                "https://t.example/",
                ResourceType::Xhr,
            ))
            .unwrap();
        assert_eq!(probe.counters().dropped_orphans, 1);
    }

    #[test]
    fn misplaced_fields_are_rejected() {
        let mut ev = sub(
            Stage::BeforeRequest,
            1,
            1,
            "https://t.example/",
            ResourceType::Xhr,
        );
        ev.status_code = Some(200);
        assert!(matches!(
            ev.validate(),
            Err(ProbeError::MisplacedField {
                field: "status_code",
                ..
            })
        ));
    }

    #[test]
    fn external_block_signal_arithmetic() {
        let mk = |before, received, blocked| ThirdPartyStats {
            count_before_request: before,
            count_headers_received: received,
            count_blocked: blocked,
            ..ThirdPartyStats::default()
        };
        assert_eq!(mk(5, 5, 0).external_block_signal(), 0);
        assert_eq!(mk(5, 2, 1).external_block_signal(), 2);
        assert_eq!(mk(3, 0, 3).external_block_signal(), 0);
    }

    #[test]
    fn event_json_schema() {
        let line = r#"{"stage":"headers_received","tab_id":3,"request_id":4,"timestamp":5,"url":"https://t.example/","resource_type":"image","method":"GET","is_main_frame_context":false,"status_code":204,"content_length":43,"from_cache":false,"set_cookie":true,"server_ip":"198.51.100.1","blocked_by_host_extension":false}"#;
        let ev: RequestEvent = serde_json::from_str(line).unwrap();
        assert_eq!(ev.stage, Stage::HeadersReceived);
        assert_eq!(ev.resource_type, ResourceType::Image);
        assert_eq!(ev.status_code, Some(204));
        let back: RequestEvent =
            serde_json::from_str(&serde_json::to_string(&ev).unwrap()).unwrap();
        assert_eq!(back, ev);
    }
}
