//! Deterministic discrete-event simulation of one Provider, its Backend,
//! `N` Requesters and an attacker.
//!
//! Time is integer milliseconds. Events run in `(time, sequence)` order, all
//! randomness comes from per-actor ChaCha streams derived from one seed, and
//! all per-actor state lives in ordered maps, so a run is a pure function of
//! its configuration and seed.
//!
//! Every message crosses a [`Link`] as bytes: the codec encoding between
//! Requesters, attacker and Backend, and the fixed request layouts on the
//! constrained link into the Provider. That link is shared by everyone who
//! talks to the Provider.

pub mod attacker;
pub mod link;
pub mod report;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attacker::{Attack, Attacker, AttackerContext, Observation, Outgoing};
pub use link::{transmit_latency, Link, LinkSpec};
pub use report::{DailyRow, LedgerRow, SimulationReport, Totals};

use crate::crypto::{CertificateAuthority, KeyPairAndCert, SymKey};
use crate::energy::{Burst, DeploymentConfig, EnergyError};
use crate::ids::{ProviderId, RequesterId, ServiceId};
use crate::limiter::{Algorithm, Decision, DecisionRecord, LimiterError, LimiterTable};
use crate::protocol::codec;
use crate::protocol::replay::DEFAULT_DELTA_I;
use crate::protocol::*;
use crate::time::{SimDuration, SimTime, MILLIS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Requester(RequesterId),
    Backend,
    Provider,
    Attacker,
}

/// Owner of every connection opened so far. Ids are dense.
#[derive(Debug, Default)]
pub struct ConnTable {
    owners: Vec<NodeId>,
}

impl ConnTable {
    pub fn open(&mut self, owner: NodeId) -> ConnId {
        self.owners.push(owner);
        ConnId(self.owners.len() as u64 - 1)
    }

    pub fn owner(&self, conn: ConnId) -> Option<NodeId> {
        self.owners.get(conn.0 as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn random_existing(&self, rng: &mut impl Rng) -> Option<ConnId> {
        (!self.owners.is_empty()).then(|| ConnId(rng.gen_range(0..self.owners.len() as u64)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMode {
    /// Full signature handshake for every request.
    Handshake,
    /// Requesters talk over channels the transport has already
    /// authenticated; the Backend only runs the limiter and issues (d).
    PreAuthenticated,
}

/// Verification energy per received request, from hardware measurements.
pub fn default_verification_cost(protocol: ProtocolKind) -> f64 {
    match protocol {
        ProtocolKind::Proxy => 1.21e-6,
        ProtocolKind::Ticket => 2.34e-6,
        ProtocolKind::Asymmetric => 33.14e-3,
    }
}

/// Size of one asymmetric-baseline request on the constrained link.
pub const ASYM_REQUEST_SIZE: usize = 532;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub deployment: DeploymentConfig,
    pub protocol: ProtocolKind,
    pub algorithm: Algorithm,
    pub tick: SimDuration,
    /// Burst the limiter thresholds are sized for.
    pub tolerated_burst: Burst,
    pub auth: AuthMode,
    pub constrained_link: LinkSpec,
    pub backbone_link: LinkSpec,
    pub verification_cost: f64,
    pub asym_request_size: usize,
    /// Run the limiter on the Provider in the asymmetric baseline.
    pub asym_local_limiter: bool,
    pub delta_i: u16,
    pub lookahead: u16,
    pub provider: ProviderId,
    /// Service honest Requesters ask for.
    pub service: ServiceId,
    /// How many observations the attacker keeps.
    pub observation_capacity: usize,
    /// Injections are skipped while the Provider link is busy for longer.
    pub max_injection_backlog: SimDuration,
}

impl SimConfig {
    pub fn new(deployment: DeploymentConfig, protocol: ProtocolKind, algorithm: Algorithm) -> Self {
        let service = deployment.services.keys().next().copied().unwrap_or(DeploymentConfig::LED_FLASH);
        SimConfig {
            deployment,
            protocol,
            algorithm,
            tick: SimDuration::from_minutes(1),
            tolerated_burst: Burst::new(10, service, SimDuration::from_minutes(10)),
            auth: AuthMode::Handshake,
            constrained_link: LinkSpec::constrained(),
            backbone_link: LinkSpec::backbone(),
            verification_cost: default_verification_cost(protocol),
            asym_request_size: ASYM_REQUEST_SIZE,
            asym_local_limiter: true,
            delta_i: DEFAULT_DELTA_I,
            lookahead: DEFAULT_DELTA_I,
            provider: ProviderId(1),
            service,
            observation_capacity: 4096,
            max_injection_backlog: SimDuration::from_secs(30),
        }
    }

    /// Honest Requester ids, `1..=N`.
    pub fn requester_ids(&self) -> impl Iterator<Item = RequesterId> {
        (1..=self.deployment.requesters).map(RequesterId)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown requester {0}")]
    UnknownRequester(RequesterId),
    #[error(transparent)]
    Limiter(#[from] LimiterError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Honest usage: each Requester asks once on a day with probability `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenignProfile {
    pub probability: f64,
    pub requesters: u32,
}

impl BenignProfile {
    /// `P = N / T` with `T` in days, capped at 1.
    pub fn for_deployment(cfg: &DeploymentConfig) -> Self {
        BenignProfile {
            probability: (cfg.requesters as f64 / cfg.lifetime_days).min(1.0),
            requesters: cfg.requesters,
        }
    }
}

/// Long-term keys of a deployment.
#[derive(Debug, Clone)]
pub struct KeyMaterial {
    pub ca: CertificateAuthority,
    /// `K_PB`
    pub provider_key: SymKey,
}

impl KeyMaterial {
    pub fn generate(rng: &mut ChaCha8Rng) -> Self {
        KeyMaterial { ca: CertificateAuthority::generate(rng), provider_key: SymKey::generate(rng) }
    }
}

#[derive(Debug)]
enum Action {
    Deliver { to: NodeId, conn: Option<ConnId>, bytes: Vec<u8> },
    Request { requester: RequesterId },
    AttackStep { attack: usize, step: u64 },
}

#[derive(Debug)]
struct Scheduled {
    time: SimTime,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Scheduled {}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (time, seq).
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Snapshot {
    levels: BTreeMap<RequesterId, f64>,
    drained: f64,
    verification: f64,
    service: f64,
    remaining: f64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_KEYS: u64 = 1;
const STREAM_TRAFFIC: u64 = 2;
const STREAM_ATTACKER: u64 = 3;
const STREAM_BACKEND: u64 = 4;
const STREAM_REQUESTER_BASE: u64 = 1 << 32;
const STREAM_STOLEN_BASE: u64 = 2 << 32;

pub struct Simulation {
    cfg: SimConfig,
    seed: u64,
    keys: KeyMaterial,
    requester_keys: BTreeMap<RequesterId, KeyPairAndCert>,
    now: SimTime,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    requesters: BTreeMap<RequesterId, RequesterCore>,
    backend: BackendCore,
    provider: ProviderCore,
    attacker: Attacker,
    attacks: Vec<Attack>,
    conns: ConnTable,
    links: BTreeMap<(NodeId, NodeId), Link>,
    provider_link: Link,
    traffic_rng: ChaCha8Rng,
    tallies: BTreeMap<String, u64>,
    snapshots: Vec<Snapshot>,
    events: u64,
    injected: u64,
    injections_skipped: u64,
    exhausted_at: Option<SimTime>,
}

fn variant<T: std::fmt::Debug>(v: &T) -> String {
    let s = format!("{v:?}");
    let end = s.find(['(', ' ', '{']).unwrap_or(s.len());
    s[..end].to_string()
}

impl Simulation {
    /// Builds the topology with keys drawn from `seed`.
    pub fn new(cfg: SimConfig, seed: u64) -> Result<Self, SimError> {
        let keys = KeyMaterial::generate(&mut stream(seed, STREAM_KEYS));
        Self::with_keys(cfg, seed, keys)
    }

    pub fn with_keys(cfg: SimConfig, seed: u64, keys: KeyMaterial) -> Result<Self, SimError> {
        cfg.deployment.validate()?;
        if cfg.constrained_link.data_rate <= 0.0 || cfg.backbone_link.data_rate <= 0.0 {
            return Err(SimError::Config("link data rates must be > 0".into()));
        }
        if cfg.delta_i == 0 {
            return Err(SimError::Config("delta_i must be > 0".into()));
        }
        if !(cfg.verification_cost >= 0.0) {
            return Err(SimError::Config("verification cost must be >= 0".into()));
        }
        cfg.deployment.service_energy(cfg.service)?;
        let limiter = LimiterTable::for_deployment(cfg.algorithm, &cfg.deployment, cfg.tick, &cfg.tolerated_burst)?;

        let mut key_rng = stream(seed, STREAM_KEYS);
        // Skip the draws used by KeyMaterial::generate so enrolment is the
        // same whether keys are generated or supplied.
        let _ = KeyMaterial::generate(&mut key_rng);
        let ca_pub = keys.ca.public_key();
        let backend_keys = keys.ca.enroll(BACKEND_SUBJECT, &mut key_rng);
        let backend_pub = backend_keys.signing.public_key();
        let mut requester_keys = BTreeMap::new();
        let mut requesters = BTreeMap::new();
        for id in cfg.requester_ids() {
            let k = keys.ca.enroll(id.0, &mut key_rng);
            let seed_r = stream(seed, STREAM_REQUESTER_BASE + id.0 as u64).next_u64();
            let mut core = RequesterCore::new(id, k.clone(), ca_pub, BACKEND_SUBJECT, seed_r);
            if cfg.auth == AuthMode::PreAuthenticated {
                core.pin_backend_key(backend_pub);
            }
            requesters.insert(id, core);
            requester_keys.insert(id, k);
        }

        let budget = cfg.deployment.usable_service_energy()?;
        let mut pcfg = ProviderConfig::new(cfg.provider, cfg.protocol, cfg.deployment.services.clone(), budget);
        pcfg.verification_cost = cfg.verification_cost;
        pcfg.delta_i = cfg.delta_i;
        pcfg.lookahead = cfg.lookahead;
        let provider = match cfg.protocol {
            ProtocolKind::Asymmetric => {
                ProviderCore::asymmetric(pcfg, ca_pub, cfg.asym_local_limiter.then(|| limiter.clone()))
            }
            _ => ProviderCore::symmetric(pcfg, keys.provider_key.clone()),
        };
        let mut backend = BackendCore::new(backend_keys, ca_pub, limiter, stream(seed, STREAM_BACKEND).next_u64());
        backend.add_provider(cfg.provider, keys.provider_key.clone());
        backend.set_accept_pre_auth(cfg.auth == AuthMode::PreAuthenticated);

        let ctx = AttackerContext {
            protocol: cfg.protocol,
            pre_auth: cfg.auth == AuthMode::PreAuthenticated,
            provider: cfg.provider,
            service: cfg.service,
            asym_request_size: cfg.asym_request_size,
            requesters: cfg.requester_ids().collect(),
        };
        let attacker = Attacker::new(ctx, Vec::new(), cfg.observation_capacity, stream(seed, STREAM_ATTACKER));

        Ok(Simulation {
            provider_link: Link::new(cfg.constrained_link),
            traffic_rng: stream(seed, STREAM_TRAFFIC),
            cfg,
            seed,
            keys,
            requester_keys,
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            requesters,
            backend,
            provider,
            attacker,
            attacks: Vec::new(),
            conns: ConnTable::default(),
            links: BTreeMap::new(),
            tallies: BTreeMap::new(),
            snapshots: Vec::new(),
            events: 0,
            injected: 0,
            injections_skipped: 0,
            exhausted_at: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn backend(&self) -> &BackendCore {
        &self.backend
    }

    pub fn provider(&self) -> &ProviderCore {
        &self.provider
    }

    pub fn attacker(&self) -> &Attacker {
        &self.attacker
    }

    pub fn requester(&self, id: RequesterId) -> Option<&RequesterCore> {
        self.requesters.get(&id)
    }

    /// Key material of the run. Only the test harness should look at this.
    pub fn keys(&self) -> &KeyMaterial {
        &self.keys
    }

    /// Private keys of honest Requesters, for secrecy scans.
    pub fn requester_keys(&self) -> &BTreeMap<RequesterId, KeyPairAndCert> {
        &self.requester_keys
    }

    /// Hands `requester`'s key pair to the attacker.
    pub fn compromise(&mut self, requester: RequesterId) -> Result<(), SimError> {
        if self.attacker.compromised().any(|r| r == requester) {
            return Ok(());
        }
        let keys = self.requester_keys.get(&requester).ok_or(SimError::UnknownRequester(requester))?.clone();
        let seed = stream(self.seed, STREAM_STOLEN_BASE + requester.0 as u64).next_u64();
        let mut core = RequesterCore::new(requester, keys, self.keys.ca.public_key(), BACKEND_SUBJECT, seed);
        if self.cfg.auth == AuthMode::PreAuthenticated {
            core.pin_backend_key(self.backend.public_key());
        }
        self.attacker.steal(core);
        Ok(())
    }

    fn push(&mut self, time: SimTime, action: Action) {
        self.queue.push(Scheduled { time, seq: self.seq, action });
        self.seq += 1;
    }

    /// One honest request by `requester` at `at`.
    pub fn schedule_request(&mut self, requester: RequesterId, at: SimTime) -> Result<(), SimError> {
        if !self.requesters.contains_key(&requester) {
            return Err(SimError::UnknownRequester(requester));
        }
        self.push(at.max(self.now), Action::Request { requester });
        Ok(())
    }

    /// Per Requester and day in `[0, horizon_days)`, one request with
    /// probability `P` at a uniformly random time of that day. Returns the
    /// number of requests scheduled.
    pub fn spawn_benign_traffic(&mut self, profile: &BenignProfile, horizon_days: u64) -> Result<u64, SimError> {
        if !(0.0..=1.0).contains(&profile.probability) {
            return Err(SimError::Config(format!("request probability {} outside [0, 1]", profile.probability)));
        }
        let ids: Vec<RequesterId> = self.cfg.requester_ids().take(profile.requesters as usize).collect();
        let mut n = 0;
        for day in 0..horizon_days {
            for &id in &ids {
                if self.traffic_rng.gen_bool(profile.probability) {
                    let at = SimTime::from_days(day) + SimDuration(self.traffic_rng.gen_range(0..MILLIS_PER_DAY));
                    self.push(at, Action::Request { requester: id });
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    pub fn spawn_attack(&mut self, attack: Attack) -> Result<(), SimError> {
        for r in attack.requesters() {
            self.compromise(r)?;
        }
        match &attack {
            Attack::ChainedBursts { burst, .. } => {
                burst.validate()?;
                self.cfg.deployment.service_energy(burst.service)?;
            }
            Attack::CompromisedFlood { per_day, .. } if !(*per_day >= 0.0) => {
                return Err(SimError::Config("flood rate must be >= 0".into()));
            }
            Attack::GarbageInjection { per_second, .. } if !(*per_second >= 0.0) => {
                return Err(SimError::Config("injection rate must be >= 0".into()));
            }
            _ => {}
        }
        let idx = self.attacks.len();
        let first = attack.step_time(0);
        self.attacks.push(attack);
        if let Some(t) = first {
            self.push(t.max(self.now), Action::AttackStep { attack: idx, step: 0 });
        }
        Ok(())
    }

    /// Processes every event before `t_end` and reports on the run so far.
    pub fn run_until(&mut self, t_end: SimTime) -> SimulationReport {
        assert!(t_end >= self.now, "cannot run backwards");
        while self.queue.peek().is_some_and(|e| e.time < t_end) {
            let ev = self.queue.pop().expect("peeked");
            self.snapshot_until(ev.time);
            self.now = ev.time;
            self.events += 1;
            self.dispatch(ev.action);
        }
        self.snapshot_until(t_end);
        self.now = t_end;
        self.report()
    }

    fn limiter(&self) -> Option<&LimiterTable> {
        match self.cfg.protocol {
            ProtocolKind::Asymmetric => self.provider.limiter(),
            _ => Some(self.backend.limiter()),
        }
    }

    fn decisions(&self) -> &[DecisionRecord] {
        match self.cfg.protocol {
            ProtocolKind::Asymmetric => self.provider.decisions(),
            _ => self.backend.decisions(),
        }
    }

    fn snapshot_until(&mut self, t: SimTime) {
        loop {
            let boundary = SimTime::from_days(self.snapshots.len() as u64 + 1);
            if boundary > t {
                return;
            }
            let levels = self
                .limiter()
                .map(|l| {
                    l.requesters()
                        .filter_map(|(id, s)| s.level_at(l.params(), boundary).ok().map(|v| (*id, v)))
                        .collect()
                })
                .unwrap_or_default();
            let ledger = self.provider.ledger();
            self.snapshots.push(Snapshot {
                levels,
                drained: ledger.drained(),
                verification: self.provider.verification_drained(),
                service: self.provider.service_drained(),
                remaining: ledger.remaining(),
            });
        }
    }

    fn tally(&mut self, key: String) {
        *self.tallies.entry(key).or_insert(0) += 1;
    }

    fn link(&mut self, from: NodeId, to: NodeId) -> &mut Link {
        if to == NodeId::Provider {
            &mut self.provider_link
        } else {
            let spec = self.cfg.backbone_link;
            self.links.entry((from, to)).or_insert_with(|| Link::new(spec))
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, conn: Option<ConnId>, bytes: Vec<u8>, wire_size: usize) {
        if from != NodeId::Attacker {
            self.attacker.observe(Observation { at: self.now, from, to, conn, bytes: bytes.clone() });
        }
        let now = self.now;
        let arrival = self.link(from, to).send(now, wire_size);
        self.push(arrival, Action::Deliver { to, conn, bytes });
    }

    fn send_msg(&mut self, from: NodeId, to: NodeId, conn: Option<ConnId>, msg: &ProtocolMessage) {
        let bytes = codec::encode(msg);
        let n = bytes.len();
        self.send(from, to, conn, bytes, n);
    }

    fn send_attacker(&mut self, out: Outgoing) {
        if let (Some(who), Some(conn)) = (out.channel_auth, out.conn) {
            self.backend.authenticate_channel(conn, who);
        }
        self.injected += 1;
        self.send(NodeId::Attacker, out.to, out.conn, out.bytes, out.wire_size);
    }

    fn dispatch(&mut self, action: Action) {
        match action {
            Action::Request { requester } => self.on_request(requester),
            Action::AttackStep { attack, step } => self.on_attack_step(attack, step),
            Action::Deliver { to, conn, bytes } => match to {
                NodeId::Backend => self.at_backend(conn, &bytes),
                NodeId::Provider => self.at_provider(&bytes),
                NodeId::Requester(r) => self.at_requester(r, conn, &bytes),
                NodeId::Attacker => {
                    if let Some(out) = conn.and_then(|c| self.attacker.on_reply(c, &bytes)) {
                        self.send_attacker(out);
                    }
                }
            },
        }
    }

    fn on_request(&mut self, id: RequesterId) {
        let (protocol, service, provider) = (self.cfg.protocol, self.cfg.service, self.cfg.provider);
        let me = NodeId::Requester(id);
        if protocol == ProtocolKind::Asymmetric {
            let req = self.requesters.get_mut(&id).expect("known requester").asym_request(service, provider);
            let size = self.cfg.asym_request_size;
            self.send(me, NodeId::Provider, None, codec::encode(&ProtocolMessage::Asym(req)), size);
            return;
        }
        let conn = self.conns.open(me);
        let core = self.requesters.get_mut(&id).expect("known requester");
        let msg = match self.cfg.auth {
            AuthMode::Handshake => core.start(conn, protocol, service, provider).map(ProtocolMessage::Hello),
            AuthMode::PreAuthenticated => {
                self.backend.authenticate_channel(conn, id);
                core.pre_auth(conn, protocol, service, provider).map(ProtocolMessage::PreAuth)
            }
        };
        match msg {
            Ok(m) => self.send_msg(me, NodeId::Backend, Some(conn), &m),
            Err(e) => self.tally(format!("requester.{}", variant(&e))),
        }
    }

    fn on_attack_step(&mut self, idx: usize, step: u64) {
        let outs: Vec<Outgoing> = match &self.attacks[idx] {
            Attack::ChainedBursts { requester, burst, .. } => {
                let (r, s) = (*requester, burst.service);
                self.attacker.request_as(r, s, &mut self.conns).into_iter().collect()
            }
            Attack::CompromisedFlood { requesters, service, .. } => {
                let (r, s) = (requesters[(step % requesters.len() as u64) as usize], *service);
                self.attacker.request_as(r, s, &mut self.conns).into_iter().collect()
            }
            Attack::GarbageInjection { .. } => {
                if self.provider_link.backlog(self.now) > self.cfg.max_injection_backlog {
                    self.injections_skipped += 1;
                    Vec::new()
                } else {
                    vec![self.attacker.garbage()]
                }
            }
            Attack::Fuzz { .. } => self.attacker.fuzz_step(&mut self.conns),
        };
        for out in outs {
            self.send_attacker(out);
        }
        if let Some(t) = self.attacks[idx].step_time(step + 1) {
            self.push(t.max(self.now), Action::AttackStep { attack: idx, step: step + 1 });
        }
    }

    fn at_backend(&mut self, conn: Option<ConnId>, bytes: &[u8]) {
        let Some(conn) = conn else {
            return self.tally("backend.no_connection".into());
        };
        let msg = match codec::decode(bytes) {
            Ok(m) => m,
            Err(e) => return self.tally(format!("backend.malformed.{}", variant(&e))),
        };
        let reply_to = self.conns.owner(conn);
        match self.backend.handle(conn, &msg, self.now) {
            Ok(BackendOutput::Proxy { provider: _, msg }) => {
                self.tally("backend.proxy".into());
                self.send(NodeId::Backend, NodeId::Provider, None, msg.to_bytes().to_vec(), MSG_D_LEN);
            }
            Ok(out) => {
                let reply = match out {
                    BackendOutput::Challenge(b) => ProtocolMessage::Challenge(b),
                    BackendOutput::Ticket(d) => ProtocolMessage::TicketGrant(d),
                    BackendOutput::RateLimited => ProtocolMessage::RateLimited,
                    BackendOutput::Proxy { .. } => unreachable!(),
                };
                self.tally(format!("backend.{}", reply.kind()));
                if let Some(to) = reply_to {
                    self.send_msg(NodeId::Backend, to, Some(conn), &reply);
                }
            }
            Err(e) => self.tally(format!("backend.{}", variant(&e))),
        }
    }

    fn at_requester(&mut self, id: RequesterId, conn: Option<ConnId>, bytes: &[u8]) {
        let (Some(core), Some(conn)) = (self.requesters.get_mut(&id), conn) else {
            return self.tally("requester.undeliverable".into());
        };
        let msg = match codec::decode(bytes) {
            Ok(m) => m,
            Err(e) => return self.tally(format!("requester.malformed.{}", variant(&e))),
        };
        match core.handle(conn, &msg) {
            Ok(RequesterOutput::ToBackend(m)) => self.send_msg(NodeId::Requester(id), NodeId::Backend, Some(conn), &m),
            Ok(RequesterOutput::Redeem { msg, .. }) => {
                self.send(NodeId::Requester(id), NodeId::Provider, None, msg.to_bytes().to_vec(), MSG_E_LEN)
            }
            Ok(RequesterOutput::Throttled) => self.tally("requester.throttled".into()),
            Err(e) => self.tally(format!("requester.{}", variant(&e))),
        }
    }

    fn at_provider(&mut self, bytes: &[u8]) {
        match self.provider.handle_bytes(bytes, self.now) {
            Verdict::Serve(_) => self.tally("provider.serve".into()),
            Verdict::Reject(r) => self.tally(format!("provider.reject.{r:?}")),
        }
        if self.exhausted_at.is_none() && self.provider.ledger().is_exhausted() {
            self.exhausted_at = Some(self.now);
        }
    }

    /// Report on everything up to now.
    pub fn report(&self) -> SimulationReport {
        let days = self.snapshots.len() as u64;
        let mut counts: BTreeMap<(u64, RequesterId), (u64, u64)> = BTreeMap::new();
        let (mut served, mut dropped) = (0, 0);
        for d in self.decisions() {
            let e = counts.entry((d.at.day(), d.requester)).or_default();
            match d.decision {
                Decision::Served => {
                    e.0 += 1;
                    served += 1;
                }
                Decision::Dropped => {
                    e.1 += 1;
                    dropped += 1;
                }
            }
        }
        let mut ids: Vec<RequesterId> = self.cfg.requester_ids().collect();
        for (_, r) in counts.keys() {
            if !ids.contains(r) {
                ids.push(*r);
            }
        }
        ids.sort();
        let mut daily = Vec::with_capacity(days as usize * ids.len());
        for day in 0..days {
            for &id in &ids {
                let (s, d) = counts.get(&(day, id)).copied().unwrap_or_default();
                daily.push(DailyRow {
                    day,
                    requester_id: id.0,
                    requests: s + d,
                    served: s,
                    dropped: d,
                    counter_j: self.snapshots[day as usize].levels.get(&id).copied(),
                });
            }
        }
        let ledger = self
            .snapshots
            .iter()
            .enumerate()
            .map(|(day, s)| LedgerRow {
                day: day as u64,
                drained_j: s.drained,
                verification_j: s.verification,
                service_j: s.service,
                remaining_j: s.remaining,
            })
            .collect();
        let l = self.provider.ledger();
        let mut tallies = self.tallies.clone();
        if let Some(t) = self.exhausted_at {
            tallies.insert("provider.exhausted_at_ms".into(), t.millis());
        }
        SimulationReport {
            protocol: self.cfg.protocol,
            algorithm: self.cfg.algorithm,
            seed: self.seed,
            end_ms: self.now.millis(),
            days,
            totals: Totals {
                events: self.events,
                provider_handled: self.provider.handled(),
                provider_served: self.provider.served().len() as u64,
                limiter_served: served,
                limiter_dropped: dropped,
                drained_j: l.drained(),
                verification_j: self.provider.verification_drained(),
                service_j: self.provider.service_drained(),
                budget_j: l.budget(),
                injected: self.injected,
                injections_skipped: self.injections_skipped,
                observed: self.attacker.observed_total(),
            },
            tallies,
            daily,
            ledger,
        }
    }

    /// When the Provider's ledger first reached its budget.
    pub fn exhausted_at(&self) -> Option<SimTime> {
        self.exhausted_at
    }
}
