//! Discrete-event model of the unlinkable collection channel.
//!
//! Clients seal each sanitized page load, hold it for a random delay, then
//! hand it to one of several proxies chosen by hashing the envelope. Proxies
//! see the sender's network identity and an opaque envelope; the collector
//! sees plaintext payloads with no sender. Neither log type has a field that
//! could hold what the other party saw.
//!
//! Sealing is a toy keyed construction (ChaCha20 keystream plus a truncated
//! MD5 tag), standing in for real public-key encryption.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::hash::{md5_bytes, md5_prefix_u64};
use crate::sanitize::SanitizedPageLoad;

const NONCE_LEN: usize = 8;
const TAG_LEN: usize = 8;

/// Default client-side hold window, in milliseconds.
pub const DEFAULT_DELAY_MIN_MS: i64 = 0;
pub const DEFAULT_DELAY_MAX_MS: i64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("envelope too short")]
    Truncated,
    #[error("envelope failed authentication")]
    AuthenticationFailed,
    #[error("payload is not a sanitized page load: {0}")]
    MalformedPayload(String),
    #[error("delay window is inverted: min {min} > max {max}")]
    BadDelayWindow { min: i64, max: i64 },
    #[error("at least one proxy is required")]
    NoProxies,
    #[error("message refers to client {0}, which does not exist")]
    UnknownClient(usize),
}

/// Key shared by clients (to seal) and the collector (to unseal).
#[derive(Clone, PartialEq, Eq)]
pub struct SealingKey([u8; 32]);

impl core::fmt::Debug for SealingKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("SealingKey(..)")
    }
}

impl SealingKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Deterministic key for simulations.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6b65_795f_7365_6564);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self(key)
    }

    fn keystream(&self, nonce: u64, data: &mut [u8]) {
        let mut rng = ChaCha20Rng::from_seed(self.0);
        rng.set_stream(nonce);
        let mut block = [0u8; 64];
        for chunk in data.chunks_mut(64) {
            rng.fill_bytes(&mut block);
            for (b, k) in chunk.iter_mut().zip(block.iter()) {
                *b ^= k;
            }
        }
    }

    fn tag(&self, nonce: &[u8], ciphertext: &[u8]) -> [u8; TAG_LEN] {
        let digest = md5_bytes(&[&self.0, nonce, ciphertext]);
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&digest[..TAG_LEN]);
        tag
    }
}

/// Client-side sealing with a fresh nonce per message.
#[derive(Debug, Clone)]
pub struct Sealer {
    key: SealingKey,
    nonces: ChaCha8Rng,
}

impl Sealer {
    pub fn new(key: SealingKey, nonce_seed: u64) -> Self {
        Self {
            key,
            nonces: ChaCha8Rng::seed_from_u64(nonce_seed),
        }
    }

    pub fn seal_bytes(&mut self, plaintext: &[u8]) -> Vec<u8> {
        let nonce = self.nonces.next_u64();
        let nonce_bytes = nonce.to_le_bytes();
        let mut envelope = Vec::with_capacity(NONCE_LEN + plaintext.len() + TAG_LEN);
        envelope.extend_from_slice(&nonce_bytes);
        let mut body = plaintext.to_vec();
        self.key.keystream(nonce, &mut body);
        let tag = self.key.tag(&nonce_bytes, &body);
        envelope.extend_from_slice(&body);
        envelope.extend_from_slice(&tag);
        envelope
    }

    pub fn seal(&mut self, payload: &SanitizedPageLoad, send_time: i64) -> SealedMessage {
        SealedMessage {
            envelope: self.seal_bytes(payload.to_json().as_bytes()),
            proxy_index: 0,
            send_time,
        }
    }
}

/// Unsealing capability; only the collector holds one. A sealed message
/// itself offers no way back to the plaintext:
///
/// ```compile_fail
/// # use trackscope_core::transport::SealedMessage;
/// fn peek(m: &SealedMessage) {
///     let _ = m.unseal();
/// }
/// ```
#[derive(Debug, Clone)]
pub struct Unsealer {
    key: SealingKey,
}

impl Unsealer {
    pub fn new(key: SealingKey) -> Self {
        Self { key }
    }

    pub fn unseal_bytes(&self, envelope: &[u8]) -> Result<Vec<u8>, TransportError> {
        if envelope.len() < NONCE_LEN + TAG_LEN {
            return Err(TransportError::Truncated);
        }
        let (nonce_bytes, rest) = envelope.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        if self.key.tag(nonce_bytes, body) != tag {
            return Err(TransportError::AuthenticationFailed);
        }
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(nonce_bytes);
        let mut plain = body.to_vec();
        self.key.keystream(u64::from_le_bytes(nonce), &mut plain);
        Ok(plain)
    }

    pub fn unseal(&self, msg: &SealedMessage) -> Result<SanitizedPageLoad, TransportError> {
        let plain = self.unseal_bytes(&msg.envelope)?;
        let text = core::str::from_utf8(&plain)
            .map_err(|e| TransportError::MalformedPayload(alloc::format!("{e}")))?;
        SanitizedPageLoad::from_json(text)
            .map_err(|e| TransportError::MalformedPayload(alloc::format!("{e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedMessage {
    pub envelope: Vec<u8>,
    pub proxy_index: usize,
    pub send_time: i64,
}

/// Proxy chosen for a message: a uniform hash of the envelope bytes.
///
/// Panics if `proxy_count` is zero.
pub fn route(msg: &SealedMessage, proxy_count: usize) -> usize {
    assert!(proxy_count > 0, "route needs at least one proxy");
    (md5_prefix_u64(&msg.envelope) % proxy_count as u64) as usize
}

#[derive(Debug, Clone)]
struct Pending {
    dispatch_at: i64,
    seq: u64,
    msg: SealedMessage,
}

/// Client-side hold queue. Each message is released at
/// `send_time + d` with `d` drawn uniformly from `[delay_min, delay_max]`.
#[derive(Debug, Clone)]
pub struct ClientChannel {
    delay_min: i64,
    delay_max: i64,
    rng: ChaCha8Rng,
    pending: Vec<Pending>,
    next_seq: u64,
}

impl ClientChannel {
    pub fn new(delay_min: i64, delay_max: i64, rng_seed: u64) -> Result<Self, TransportError> {
        if delay_min > delay_max {
            return Err(TransportError::BadDelayWindow {
                min: delay_min,
                max: delay_max,
            });
        }
        Ok(Self {
            delay_min,
            delay_max,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            pending: Vec::new(),
            next_seq: 0,
        })
    }

    pub fn enqueue(&mut self, msg: SealedMessage) {
        let delay = self.rng.random_range(self.delay_min..=self.delay_max);
        self.pending.push(Pending {
            dispatch_at: msg.send_time + delay,
            seq: self.next_seq,
            msg,
        });
        self.next_seq += 1;
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn next_dispatch_time(&self) -> Option<i64> {
        self.pending.iter().map(|p| p.dispatch_at).min()
    }

    /// Releases every message due at or before `now`, ordered by dispatch
    /// time (ties by enqueue order).
    pub fn dispatch(&mut self, now: i64) -> Vec<SealedMessage> {
        self.dispatch_timed(now)
            .into_iter()
            .map(|(_, m)| m)
            .collect()
    }

    fn dispatch_timed(&mut self, now: i64) -> Vec<(i64, SealedMessage)> {
        let (mut due, keep): (Vec<Pending>, Vec<Pending>) =
            self.pending.drain(..).partition(|p| p.dispatch_at <= now);
        self.pending = keep;
        due.sort_by_key(|p| (p.dispatch_at, p.seq));
        due.into_iter().map(|p| (p.dispatch_at, p.msg)).collect()
    }
}

/// What a proxy records: who sent how many bytes when. No payload field.
///
/// ```compile_fail
/// # use trackscope_core::transport::ProxyObservation;
/// fn peek(o: &ProxyObservation) -> usize {
///     o.payload.third_parties.len()
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyObservation {
    pub source_id: String,
    pub envelope_size: usize,
    pub time: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyLog {
    pub proxy_index: usize,
    pub observations: Vec<ProxyObservation>,
}

/// What the collector records: the payload and when it arrived. No sender
/// field exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectorEntry {
    pub payload: SanitizedPageLoad,
    pub arrival_time: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectorLog {
    pub entries: Vec<CollectorEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub proxies: usize,
    pub delay_min_ms: i64,
    pub delay_max_ms: i64,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            proxies: 4,
            delay_min_ms: DEFAULT_DELAY_MIN_MS,
            delay_max_ms: DEFAULT_DELAY_MAX_MS,
            seed: 0,
        }
    }
}

/// A simulated browser: its network identity and its hold queue.
#[derive(Debug, Clone)]
pub struct Client {
    pub source_id: String,
    pub channel: ClientChannel,
    sealer: Sealer,
}

impl Client {
    pub fn new(source_id: impl Into<String>, channel: ClientChannel, sealer: Sealer) -> Self {
        Self {
            source_id: source_id.into(),
            channel,
            sealer,
        }
    }
}

/// One payload to send: which client sends it, and when.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub client: usize,
    pub send_time: i64,
    pub payload: SanitizedPageLoad,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub proxy_logs: Vec<ProxyLog>,
    pub collector_log: CollectorLog,
    /// Index into the input messages for each collector entry. Ground truth
    /// for linkage experiments; never part of any party's view.
    pub delivery_order: Vec<usize>,
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builds `count` clients whose channel and nonce seeds derive from
/// `config.seed`.
pub fn make_clients(
    source_ids: &[String],
    config: &TransportConfig,
    key: &SealingKey,
) -> Result<Vec<Client>, TransportError> {
    source_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let channel = ClientChannel::new(
                config.delay_min_ms,
                config.delay_max_ms,
                mix_seed(config.seed, 2 * i as u64),
            )?;
            let sealer = Sealer::new(key.clone(), mix_seed(config.seed, 2 * i as u64 + 1));
            Ok(Client::new(id.clone(), channel, sealer))
        })
        .collect()
}

/// Runs the event loop until every message reaches the collector.
///
/// Time advances to the next send or release. Sends due at a time are
/// sealed and queued first; releases at that time then go through their
/// proxy to the collector in (time, client, enqueue) order.
pub fn run_simulation(
    clients: &mut [Client],
    proxies: usize,
    messages: &[Outbound],
    collector: &Unsealer,
) -> Result<SimulationOutcome, TransportError> {
    if proxies == 0 {
        return Err(TransportError::NoProxies);
    }
    if let Some(m) = messages.iter().find(|m| m.client >= clients.len()) {
        return Err(TransportError::UnknownClient(m.client));
    }
    let mut order: Vec<usize> = (0..messages.len()).collect();
    order.sort_by_key(|&i| (messages[i].send_time, i));

    let mut proxy_logs: Vec<ProxyLog> = (0..proxies)
        .map(|proxy_index| ProxyLog {
            proxy_index,
            observations: Vec::new(),
        })
        .collect();
    let mut collector_log = CollectorLog::default();
    let mut delivery_order = Vec::with_capacity(messages.len());
    // envelope -> message index, held by the harness only
    let mut truth: BTreeMap<Vec<u8>, usize> = BTreeMap::new();

    let mut next_send = 0;
    loop {
        let send_t = order.get(next_send).map(|&i| messages[i].send_time);
        let release_t = clients
            .iter()
            .filter_map(|c| c.channel.next_dispatch_time())
            .min();
        let now = match (send_t, release_t) {
            (None, None) => break,
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
        };
        while let Some(&i) = order.get(next_send) {
            if messages[i].send_time > now {
                break;
            }
            let out = &messages[i];
            let client = &mut clients[out.client];
            let mut msg = client.sealer.seal(&out.payload, out.send_time);
            msg.proxy_index = route(&msg, proxies);
            truth.insert(msg.envelope.clone(), i);
            client.channel.enqueue(msg);
            next_send += 1;
        }
        for client in clients.iter_mut() {
            for (time, msg) in client.channel.dispatch_timed(now) {
                proxy_logs[msg.proxy_index]
                    .observations
                    .push(ProxyObservation {
                        source_id: client.source_id.clone(),
                        envelope_size: msg.envelope.len(),
                        time,
                    });
                let payload = collector.unseal(&msg)?;
                collector_log.entries.push(CollectorEntry {
                    payload,
                    arrival_time: time,
                });
                delivery_order.push(truth.remove(&msg.envelope).unwrap_or(usize::MAX));
            }
        }
    }
    Ok(SimulationOutcome {
        proxy_logs,
        collector_log,
        delivery_order,
    })
}

/// Fraction of messages each proxy handled.
pub fn proxy_shares(logs: &[ProxyLog]) -> Vec<f64> {
    let total: usize = logs.iter().map(|l| l.observations.len()).sum();
    logs.iter()
        .map(|l| {
            if total == 0 {
                0.0
            } else {
                l.observations.len() as f64 / total as f64
            }
        })
        .collect()
}

/// Fraction of send-adjacent message pairs `(i, i + 1)` that arrive in
/// swapped order. `delivery_order[j]` is the send index of the j-th arrival.
pub fn adjacent_inversion_rate(delivery_order: &[usize]) -> f64 {
    let n = delivery_order.len();
    if n < 2 {
        return 0.0;
    }
    let mut position = alloc::vec![0usize; n];
    for (pos, &msg) in delivery_order.iter().enumerate() {
        if msg < n {
            position[msg] = pos;
        }
    }
    let inversions = (0..n - 1)
        .filter(|&i| position[i] > position[i + 1])
        .count();
    inversions as f64 / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::Protocol;
    use crate::time::MonthKey;
    use alloc::string::ToString;
    use alloc::vec;

    fn payload(tag: &str) -> SanitizedPageLoad {
        SanitizedPageLoad {
            protocol: Protocol::Https,
            month: MonthKey::new(2018, 4).unwrap(),
            user_country: None,
            hostname_digest: tag.into(),
            path_digest: "6666cd76f9695646".into(),
            third_parties: vec![],
        }
    }

    #[test]
    fn seal_round_trip_and_nonce() {
        let key = SealingKey::from_seed(1);
        let mut sealer = Sealer::new(key.clone(), 9);
        let a = sealer.seal(&payload("aa"), 0);
        let b = sealer.seal(&payload("aa"), 0);
        assert_ne!(a.envelope, b.envelope);
        let collector = Unsealer::new(key);
        assert_eq!(collector.unseal(&a).unwrap(), payload("aa"));
        assert_eq!(collector.unseal(&b).unwrap(), payload("aa"));
    }

    #[test]
    fn foreign_keys_and_tampering_fail() {
        let mut sealer = Sealer::new(SealingKey::from_seed(1), 0);
        let msg = sealer.seal(&payload("aa"), 0);
        let outsider = Unsealer::new(SealingKey::from_seed(2));
        assert_eq!(
            outsider.unseal(&msg),
            Err(TransportError::AuthenticationFailed)
        );
        let mut tampered = msg.clone();
        tampered.envelope[10] ^= 1;
        let collector = Unsealer::new(SealingKey::from_seed(1));
        assert_eq!(
            collector.unseal(&tampered),
            Err(TransportError::AuthenticationFailed)
        );
        assert_eq!(
            collector.unseal_bytes(&[0; 4]),
            Err(TransportError::Truncated)
        );
    }

    #[test]
    fn envelope_hides_plaintext() {
        let mut sealer = Sealer::new(SealingKey::from_seed(1), 0);
        let msg = sealer.seal(&payload("visible-marker"), 0);
        let needle = b"visible-marker";
        assert!(!msg.envelope.windows(needle.len()).any(|w| w == needle));
    }

    #[test]
    fn routing() {
        let mut sealer = Sealer::new(SealingKey::from_seed(1), 0);
        let msg = sealer.seal(&payload("x"), 0);
        assert_eq!(route(&msg, 1), 0);
        assert_eq!(route(&msg, 7), route(&msg, 7));
        assert!(route(&msg, 7) < 7);
    }

    #[test]
    fn zero_window_is_fifo() {
        let mut ch = ClientChannel::new(0, 0, 3).unwrap();
        for t in [5, 5, 6] {
            ch.enqueue(SealedMessage {
                envelope: vec![t as u8],
                proxy_index: 0,
                send_time: t,
            });
        }
        assert!(ch.dispatch(4).is_empty());
        let out: Vec<u8> = ch.dispatch(10).into_iter().map(|m| m.envelope[0]).collect();
        assert_eq!(out, vec![5, 5, 6]);
        assert!(ch.is_empty());
        assert!(ch.dispatch(100).is_empty());
        assert!(ClientChannel::new(5, 1, 0).is_err());
    }

    #[test]
    fn dispatch_times_stay_in_window() {
        let mut ch = ClientChannel::new(100, 200, 42).unwrap();
        for i in 0..200 {
            ch.enqueue(SealedMessage {
                envelope: vec![],
                proxy_index: 0,
                send_time: i,
            });
        }
        for p in &ch.pending {
            let delay = p.dispatch_at - p.msg.send_time;
            assert!((100..=200).contains(&delay));
        }
    }

    fn simulate(clients: usize, n: usize, seed: u64) -> SimulationOutcome {
        let key = SealingKey::from_seed(seed);
        let config = TransportConfig {
            proxies: 3,
            seed,
            ..TransportConfig::default()
        };
        let ids: Vec<String> = (0..clients).map(|i| alloc::format!("10.0.0.{i}")).collect();
        let mut cs = make_clients(&ids, &config, &key).unwrap();
        let msgs: Vec<Outbound> = (0..n)
            .map(|i| Outbound {
                client: i % clients,
                send_time: (i as i64) * 500,
                payload: payload(&i.to_string()),
            })
            .collect();
        run_simulation(&mut cs, 3, &msgs, &Unsealer::new(key)).unwrap()
    }

    #[test]
    fn single_message_reaches_collector() {
        let out = simulate(1, 1, 5);
        assert_eq!(out.collector_log.entries.len(), 1);
        assert_eq!(out.collector_log.entries[0].payload, payload("0"));
        let json = serde_json::to_string(&out.collector_log).unwrap();
        assert!(!json.contains("10.0.0.0"));
        assert!(!json.contains("source"));
    }

    #[test]
    fn conservation_and_determinism() {
        let a = simulate(5, 200, 11);
        let proxied: usize = a.proxy_logs.iter().map(|l| l.observations.len()).sum();
        assert_eq!(proxied, 200);
        assert_eq!(a.collector_log.entries.len(), 200);
        let mut seen = a.delivery_order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..200).collect::<Vec<_>>());
        let b = simulate(5, 200, 11);
        assert_eq!(a.proxy_logs, b.proxy_logs);
        assert_eq!(a.collector_log, b.collector_log);
        let c = simulate(5, 200, 12);
        assert_ne!(a.collector_log, c.collector_log);
    }

    #[test]
    fn inversion_rate_helper() {
        assert_eq!(adjacent_inversion_rate(&[0, 1, 2, 3]), 0.0);
        assert_eq!(adjacent_inversion_rate(&[3, 2, 1, 0]), 1.0);
        assert_eq!(adjacent_inversion_rate(&[1, 0, 2]), 0.5);
        assert_eq!(proxy_shares(&[]), Vec::<f64>::new());
    }

    #[test]
    fn rejects_bad_inputs() {
        let key = SealingKey::from_seed(0);
        let mut cs = make_clients(&["a".into()], &TransportConfig::default(), &key).unwrap();
        let msg = Outbound {
            client: 3,
            send_time: 0,
            payload: payload("x"),
        };
        let un = Unsealer::new(key);
        assert_eq!(
            run_simulation(&mut cs, 1, std::slice::from_ref(&msg), &un).unwrap_err(),
            TransportError::UnknownClient(3)
        );
        assert_eq!(
            run_simulation(&mut cs, 0, &[msg], &un).unwrap_err(),
            TransportError::NoProxies
        );
    }
}
