//! Standalone transport simulation with synthetic payloads.

use serde::{Deserialize, Serialize};
use trackscope_core::hash::hash_truncated;
use trackscope_core::probe::Protocol;
use trackscope_core::sanitize::SanitizedPageLoad;
use trackscope_core::time::MonthKey;
use trackscope_core::transport::{
    adjacent_inversion_rate, make_clients, proxy_shares, run_simulation, Outbound, SealingKey,
    SimulationOutcome, TransportConfig, TransportError, Unsealer,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub clients: usize,
    pub messages: usize,
    /// Gap between consecutive sends; messages go to clients round-robin.
    pub send_interval_ms: i64,
    pub transport: TransportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSummary {
    pub params: SimParams,
    pub proxy_counts: Vec<usize>,
    pub proxy_shares: Vec<f64>,
    pub delivered: usize,
    pub adjacent_inversion_rate: f64,
    pub mean_latency_ms: f64,
}

fn payload(i: usize, send_time: i64) -> SanitizedPageLoad {
    SanitizedPageLoad {
        protocol: Protocol::Https,
        month: MonthKey::from_epoch_ms(send_time),
        user_country: None,
        hostname_digest: hash_truncated(&format!("site-{i}")),
        path_digest: hash_truncated("/"),
        third_parties: Vec::new(),
    }
}

pub fn simulate(params: &SimParams) -> Result<SimulationOutcome, TransportError> {
    let key = SealingKey::from_seed(params.transport.seed);
    let ids: Vec<String> = (0..params.clients.max(1))
        .map(|i| format!("client-{i}"))
        .collect();
    let mut clients = make_clients(&ids, &params.transport, &key)?;
    let messages: Vec<Outbound> = (0..params.messages)
        .map(|i| {
            let send_time = i as i64 * params.send_interval_ms;
            Outbound {
                client: i % ids.len(),
                send_time,
                payload: payload(i, send_time),
            }
        })
        .collect();
    run_simulation(
        &mut clients,
        params.transport.proxies,
        &messages,
        &Unsealer::new(key),
    )
}

pub fn summarize(params: &SimParams) -> Result<TransportSummary, TransportError> {
    let outcome = simulate(params)?;
    let delivered = outcome.collector_log.entries.len();
    let latency: i64 = outcome
        .collector_log
        .entries
        .iter()
        .zip(&outcome.delivery_order)
        .map(|(e, &i)| e.arrival_time - i as i64 * params.send_interval_ms)
        .sum();
    Ok(TransportSummary {
        params: *params,
        proxy_counts: outcome
            .proxy_logs
            .iter()
            .map(|l| l.observations.len())
            .collect(),
        proxy_shares: proxy_shares(&outcome.proxy_logs),
        delivered,
        adjacent_inversion_rate: adjacent_inversion_rate(&outcome.delivery_order),
        mean_latency_ms: if delivered == 0 {
            0.0
        } else {
            latency as f64 / delivered as f64
        },
    })
}
