//! probe → quorum → sanitize → transport → aggregate.
//!
//! Quorum counts are built in a first pass over each window's sub-resource
//! requests, with each event's client as observer; the probe then
//! classifies requests against the store for the window they fall in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trackscope_core::aggregate::REPORT_SCHEMA_VERSION;
use trackscope_core::aggregate::{aggregate_by_month, AggregateError, AggregateReport};
use trackscope_core::domain::parse_url;
use trackscope_core::hash::hash_truncated;
use trackscope_core::probe::{
    Probe, ProbeContext, ProbeCounters, RequestEvent, ResourceType, Stage, EVENT_SCHEMA_VERSION,
};
use trackscope_core::quorum::QuorumStore;
use trackscope_core::sanitize::{SanitizedPageLoad, Sanitizer, SANITIZED_SCHEMA_VERSION};
use trackscope_core::time::MonthKey;
use trackscope_core::transport::{make_clients, run_simulation, Outbound, SealingKey, Unsealer};

use crate::config::{PipelineConfig, Tables};
use crate::error::{CliError, Result};
use crate::formats;
use crate::report;

/// Observer and sender id for events that carry no client.
pub const ANONYMOUS_CLIENT: &str = "anonymous";

const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub events: u64,
    pub probe: ProbeCounters,
    pub page_loads: u64,
    pub quorum_windows: u64,
    pub quorum_entries: u64,
    pub clients: u64,
    pub delivered: u64,
    pub proxy_messages: Vec<u64>,
    pub pages_per_month: BTreeMap<MonthKey, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub event_schema: String,
    pub sanitized_schema: String,
    pub report_schema: String,
    pub suffix_list_version: String,
    pub tracker_db_version: String,
    pub input_digest: String,
    pub config: PipelineConfig,
    pub counts: RunCounts,
    pub outputs: Vec<String>,
}

pub struct RunOutcome {
    pub reports: Vec<AggregateReport>,
    /// Payloads as the collector received them, in arrival order.
    pub collected: Vec<SanitizedPageLoad>,
    pub counts: RunCounts,
}

fn window_of(ts: i64, window_days: u32) -> i64 {
    ts.div_euclid(i64::from(window_days.max(1)) * DAY_MS)
}

fn client_of(ev: &RequestEvent) -> &str {
    ev.client_id.as_deref().unwrap_or(ANONYMOUS_CLIENT)
}

/// Per-window quorum stores built from every sub-resource request.
pub fn build_quorum(
    config: &PipelineConfig,
    events: &[(u64, RequestEvent)],
) -> Result<BTreeMap<i64, QuorumStore>> {
    let prior = match &config.quorum_import {
        Some(p) => {
            let mut store = QuorumStore::new(config.quorum);
            formats::import_quorum(&mut store, &formats::read_text(p)?, p)?;
            Some(store)
        }
        None => None,
    };
    let mut stores: BTreeMap<i64, QuorumStore> = BTreeMap::new();
    for (line, ev) in events {
        if ev.stage != Stage::BeforeRequest || ev.resource_type == ResourceType::MainFrame {
            continue;
        }
        let url = parse_url(&ev.url).map_err(|e| CliError::Stage {
            stage: "quorum",
            line: *line,
            message: e.to_string(),
        })?;
        let store = stores
            .entry(window_of(ev.timestamp, config.quorum.window_days))
            .or_insert_with(|| {
                prior
                    .clone()
                    .unwrap_or_else(|| QuorumStore::new(config.quorum))
            });
        for (key, value) in store.extract_tokens(&url) {
            store.observe(&key, &value, client_of(ev));
        }
    }
    Ok(stores)
}

/// Runs every stage over parsed events. `line` numbers are only used in
/// error messages.
pub fn run_events(
    config: &PipelineConfig,
    tables: &Tables,
    events: &[(u64, RequestEvent)],
) -> Result<RunOutcome> {
    if events.is_empty() {
        return Err(CliError::Empty("event log contains no events".into()));
    }
    for (line, ev) in events {
        ev.validate().map_err(|e| CliError::Stage {
            stage: "probe",
            line: *line,
            message: e.to_string(),
        })?;
    }
    let stores = build_quorum(config, events)?;
    let empty_store = QuorumStore::new(config.quorum);

    let mut probe = Probe::new(ProbeContext {
        suffixes: &tables.suffixes,
        geo: &tables.geo,
        quorum: &empty_store,
    });
    let mut records = Vec::new();
    let mut current_window = None;
    for (line, ev) in events {
        let w = window_of(ev.timestamp, config.quorum.window_days);
        if current_window != Some(w) {
            probe.set_quorum(stores.get(&w).unwrap_or(&empty_store));
            current_window = Some(w);
        }
        let closed = probe.ingest(ev).map_err(|e| CliError::Stage {
            stage: "probe",
            line: *line,
            message: e.to_string(),
        })?;
        records.extend(closed);
    }
    let (rest, probe_counts) = probe.finish();
    records.extend(rest);
    if records.is_empty() {
        return Err(CliError::Empty("no page loads in the event log".into()));
    }

    let sanitizer = Sanitizer::new(config.hash_truncation_bytes, tables.rules.clone());
    let clients: BTreeSet<&str> = records
        .iter()
        .map(|r| r.client_id.as_deref().unwrap_or(ANONYMOUS_CLIENT))
        .collect();
    let client_ids: Vec<String> = clients.iter().map(|c| c.to_string()).collect();
    let client_index: BTreeMap<&str, usize> =
        clients.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let outbound: Vec<Outbound> = records
        .iter()
        .map(|r| Outbound {
            client: client_index[r.client_id.as_deref().unwrap_or(ANONYMOUS_CLIENT)],
            send_time: r.started_at,
            payload: sanitizer.sanitize(r, &tables.suffixes),
        })
        .collect();

    let key = SealingKey::from_seed(config.transport.seed);
    let mut sim_clients = make_clients(&client_ids, &config.transport, &key)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcome = run_simulation(
        &mut sim_clients,
        config.transport.proxies,
        &outbound,
        &Unsealer::new(key),
    )
    .map_err(|e| CliError::Stage {
        stage: "transport",
        line: 0,
        message: e.to_string(),
    })?;
    let collected: Vec<SanitizedPageLoad> = outcome
        .collector_log
        .entries
        .into_iter()
        .map(|e| e.payload)
        .filter(|p| config.month.is_none_or(|m| p.month == m))
        .collect();
    if collected.is_empty() {
        return Err(CliError::Empty(match config.month {
            Some(m) => format!("no page loads fall in {m}"),
            None => "no page loads reached the collector".into(),
        }));
    }
    let reports = aggregate_by_month(&collected, &tables.db).map_err(|e| match e {
        AggregateError::EmptyCorpus => CliError::Empty(e.to_string()),
        other => CliError::Stage {
            stage: "aggregate",
            line: 0,
            message: other.to_string(),
        },
    })?;

    let mut pages_per_month = BTreeMap::new();
    for r in &reports {
        pages_per_month.insert(r.month, r.corpus_size);
    }
    let counts = RunCounts {
        events: events.len() as u64,
        probe: probe_counts,
        page_loads: records.len() as u64,
        quorum_windows: stores.len() as u64,
        quorum_entries: stores.values().map(|s| s.len() as u64).sum(),
        clients: client_ids.len() as u64,
        delivered: collected.len() as u64,
        proxy_messages: outcome
            .proxy_logs
            .iter()
            .map(|l| l.observations.len() as u64)
            .collect(),
        pages_per_month,
    };
    Ok(RunOutcome {
        reports,
        collected,
        counts,
    })
}

/// Full `run` command: reads the log, runs the pipeline and writes the
/// reports, the collected payloads and a manifest into `out_dir`.
pub fn cmd_run(config: &PipelineConfig, events_path: &Path, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    let tables = config.load_tables()?;
    let raw = fs::read(events_path).map_err(|e| CliError::io(events_path, e))?;
    let events = formats::read_events(events_path)?;
    let outcome = run_events(config, &tables, &events)?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut outputs = Vec::new();
    for r in &outcome.reports {
        outputs.extend(report::write_report(r, out_dir)?);
    }
    let collected_path = out_dir.join("collected.ndjson");
    formats::write_ndjson(&collected_path, &outcome.collected)?;
    outputs.push("collected.ndjson".into());

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        event_schema: EVENT_SCHEMA_VERSION.into(),
        sanitized_schema: SANITIZED_SCHEMA_VERSION.into(),
        report_schema: REPORT_SCHEMA_VERSION.into(),
        suffix_list_version: tables.suffixes.source_version().into(),
        tracker_db_version: tables.db.version().into(),
        input_digest: hash_truncated_bytes(&raw),
        config: config.clone(),
        counts: outcome.counts,
        outputs,
    };
    report::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn hash_truncated_bytes(raw: &[u8]) -> String {
    hash_truncated(&String::from_utf8_lossy(raw))
}
