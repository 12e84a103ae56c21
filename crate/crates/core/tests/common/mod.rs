//! Property harnesses shared by the protocol tests and the acceptance suite.
#![allow(dead_code)]

use drainguard::crypto::{CertificateAuthority, Mac8, SymKey};
use drainguard::energy::{Burst, DeploymentConfig};
use drainguard::ids::{ProviderId, RequesterId, ServiceId};
use drainguard::limiter::{Algorithm, LimiterTable};
use drainguard::protocol::backend::{BackendOutput, GrantKind};
use drainguard::protocol::provider::{ProviderConfig, ProviderCore, Verdict};
use drainguard::protocol::replay::{Admit, ReplayCache};
use drainguard::protocol::requester::RequesterOutput;
use drainguard::protocol::*;
use drainguard::sim::{Attack, AuthMode, SimConfig, Simulation};
use drainguard::time::{SimDuration, SimTime};
use rand::{seq::index::sample, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const S: ServiceId = DeploymentConfig::LED_FLASH;
pub const P: ProviderId = ProviderId(1);

pub fn small_deployment(requesters: u32) -> DeploymentConfig {
    let mut d = DeploymentConfig::coin_cell_tag();
    d.requesters = requesters;
    d
}

/// Every Provider serve maps to its own Backend grant with the same service,
/// counter and, for tickets, commitment; and no grant is used twice.
pub fn correspondence(sim: &Simulation) -> Result<(), String> {
    let grants = sim.backend().grants();
    let mut used = vec![false; grants.len()];
    for s in sim.provider().served() {
        let hit = grants.iter().enumerate().position(|(i, g)| {
            !used[i]
                && g.provider == P
                && g.service == s.service
                && g.counter as u32 == s.counter
                && g.at <= s.at
                && match g.kind {
                    GrantKind::Proxy => s.binding.is_none(),
                    GrantKind::Ticket { h } => s.binding == Some(h),
                }
        });
        match hit {
            Some(i) => used[i] = true,
            None => return Err(format!("serve without a grant: {s:?}")),
        }
    }
    Ok(())
}

pub fn proxy_monotone(sim: &Simulation) -> Result<(), String> {
    for w in sim.provider().served().windows(2) {
        if w[0].counter >= w[1].counter {
            return Err(format!("counters {} then {}", w[0].counter, w[1].counter));
        }
    }
    Ok(())
}

pub fn fuzz_run(protocol: ProtocolKind, auth: AuthMode, seed: u64) -> Simulation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF022);
    let mut cfg = SimConfig::new(small_deployment(3), protocol, Algorithm::LeakyBucket);
    cfg.auth = auth;
    let mut sim = Simulation::new(cfg, seed).unwrap();
    for _ in 0..rng.gen_range(1..5) {
        let who = RequesterId(rng.gen_range(1..=3));
        sim.schedule_request(who, SimTime(rng.gen_range(0..60_000))).unwrap();
    }
    if rng.gen_bool(0.3) {
        sim.compromise(RequesterId(3)).unwrap();
    }
    sim.spawn_attack(Attack::Fuzz {
        steps: rng.gen_range(10..40),
        period: SimDuration(rng.gen_range(100..3_000)),
        start: SimTime(rng.gen_range(0..30_000)),
    })
    .unwrap();
    sim.run_until(SimTime(600_000));
    sim
}

#[derive(Debug, Default)]
pub struct FuzzSummary {
    pub schedules: u64,
    pub served: u64,
    pub rejected: u64,
    pub violations: Vec<String>,
}

/// `per_protocol` schedules for each symmetric protocol; every fourth one
/// runs with pre-authenticated channels.
pub fn fuzz_correspondence(per_protocol: u64) -> FuzzSummary {
    let mut out = FuzzSummary::default();
    for protocol in [ProtocolKind::Proxy, ProtocolKind::Ticket] {
        for seed in 0..per_protocol {
            let auth = if seed % 4 == 3 { AuthMode::PreAuthenticated } else { AuthMode::Handshake };
            let sim = fuzz_run(protocol, auth, seed);
            let mut check = correspondence(&sim);
            if protocol == ProtocolKind::Proxy {
                check = check.and_then(|_| proxy_monotone(&sim));
            }
            if let Err(e) = check {
                out.violations.push(format!("{protocol} seed {seed}: {e}"));
            }
            out.served += sim.provider().served().len() as u64;
            out.rejected += sim.provider().handled() - sim.provider().served().len() as u64;
            out.schedules += 1;
        }
    }
    out
}

pub struct Parties {
    pub requester: requester::RequesterCore,
    pub backend: backend::BackendCore,
    pub provider: ProviderCore,
}

pub fn parties(protocol: ProtocolKind, seed: u64) -> Parties {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ca = CertificateAuthority::generate(&mut rng);
    let kpb = SymKey::generate(&mut rng);
    let dep = DeploymentConfig::coin_cell_tag();
    let burst = Burst::new(10, S, SimDuration::from_minutes(10));
    let limiter =
        LimiterTable::for_deployment(Algorithm::LeakyBucket, &dep, SimDuration::from_minutes(1), &burst).unwrap();
    let mut backend = backend::BackendCore::new(ca.enroll(BACKEND_SUBJECT, &mut rng), ca.public_key(), limiter, 1);
    backend.add_provider(P, kpb.clone());
    let requester =
        requester::RequesterCore::new(RequesterId(1), ca.enroll(1, &mut rng), ca.public_key(), BACKEND_SUBJECT, 2);
    let cfg = ProviderConfig::new(P, protocol, dep.services.clone(), 451.0);
    Parties { requester, backend, provider: ProviderCore::symmetric(cfg, kpb) }
}

/// Full handshake; returns what the Requester ends up holding.
pub fn handshake(p: &mut Parties, protocol: ProtocolKind, conn: ConnId, now: SimTime) -> (Option<MsgD>, Option<MsgE>) {
    let a = p.requester.start(conn, protocol, S, P).unwrap();
    let b = match p.backend.handle(conn, &ProtocolMessage::Hello(a), now).unwrap() {
        BackendOutput::Challenge(b) => b,
        other => panic!("{other:?}"),
    };
    let c = match p.requester.handle(conn, &ProtocolMessage::Challenge(b)).unwrap() {
        RequesterOutput::ToBackend(m) => m,
        other => panic!("{other:?}"),
    };
    match p.backend.handle(conn, &c, now).unwrap() {
        BackendOutput::Proxy { msg, .. } => (Some(msg), None),
        BackendOutput::Ticket(d2) => match p.requester.handle(conn, &ProtocolMessage::TicketGrant(d2)).unwrap() {
            RequesterOutput::Redeem { msg, .. } => (None, Some(msg)),
            other => panic!("{other:?}"),
        },
        other => panic!("{other:?}"),
    }
}

/// Random-MAC requests at a fresh Provider; returns how many were served.
pub fn forgeries_served(protocol: ProtocolKind, n: u64, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = parties(protocol, 15).provider;
    let mut served = 0;
    for _ in 0..n {
        let mut mac = [0u8; 8];
        rng.fill_bytes(&mut mac);
        let bytes = match protocol {
            ProtocolKind::Proxy => MsgD { service: S, mac: Mac8(mac) }.to_bytes().to_vec(),
            _ => {
                let mut r = [0u8; 4];
                rng.fill_bytes(&mut r);
                let ticket = Ticket { service: S, counter: rng.gen(), mac: Mac8(mac) };
                MsgE { r, ticket }.to_bytes().to_vec()
            }
        };
        if let Verdict::Serve(_) = p.handle_bytes(&bytes, SimTime(0)) {
            served += 1;
        }
    }
    assert_eq!(p.handled(), n);
    served
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

/// Runs every protocol and auth mode with honest traffic and a fuzzing
/// attacker, then searches everything the attacker saw for long-term
/// secrets. Returns `(messages scanned, leaks)`.
pub fn secrecy_scan() -> (u64, Vec<String>) {
    let (mut scanned, mut leaks) = (0, Vec::new());
    for protocol in ProtocolKind::ALL {
        for auth in [AuthMode::Handshake, AuthMode::PreAuthenticated] {
            let mut cfg = SimConfig::new(small_deployment(4), protocol, Algorithm::Ewma);
            cfg.auth = auth;
            cfg.observation_capacity = usize::MAX;
            let mut sim = Simulation::new(cfg, 5).unwrap();
            for k in 0..40 {
                sim.schedule_request(RequesterId(1 + k % 4), SimTime(k as u64 * 90_000)).unwrap();
            }
            sim.compromise(RequesterId(4)).unwrap();
            sim.spawn_attack(Attack::Fuzz { steps: 200, period: SimDuration(5_000), start: SimTime(1_000) }).unwrap();
            sim.run_until(SimTime::from_days(1));

            let mut markers: Vec<Vec<u8>> = Vec::new();
            let kpb = sim.keys().provider_key.expose_bytes();
            markers.push(kpb.to_vec());
            markers.push(kpb[..8].to_vec());
            markers.push(kpb[8..].to_vec());
            markers.push(sim.keys().ca.signing_key().expose_seed().to_vec());
            for (id, k) in sim.requester_keys() {
                if *id != RequesterId(4) {
                    markers.push(k.signing.expose_seed().to_vec());
                }
            }
            let obs = sim.attacker().observations();
            assert_eq!(obs.len() as u64, sim.attacker().observed_total());
            assert!(obs.len() >= 40, "{protocol} {auth:?}: only {} observations", obs.len());
            for o in obs {
                scanned += 1;
                if markers.iter().any(|m| contains(&o.bytes, m)) {
                    leaks.push(format!("{protocol} {auth:?}: {o:?}"));
                }
            }
        }
    }
    (scanned, leaks)
}

/// Naive reference: remembers every accepted counter forever.
pub struct ReplayOracle {
    accepted: Vec<u16>,
    delta_i: u16,
}

impl ReplayOracle {
    pub fn new(delta_i: u16) -> Self {
        ReplayOracle { accepted: Vec::new(), delta_i }
    }

    pub fn admit(&mut self, i: u16) -> Admit {
        if let Some(&max) = self.accepted.iter().max() {
            if i < max && (max - i) > self.delta_i {
                return Admit::OutsideWindow;
            }
        }
        if self.accepted.contains(&i) {
            return Admit::Replayed;
        }
        self.accepted.push(i);
        Admit::Accept
    }
}

/// Heap's algorithm over all orderings of `items`.
pub fn for_each_permutation(items: &mut [u16], f: &mut impl FnMut(&[u16])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Four counter sets of every size 1..=8: dense, spread, and two random.
pub fn counter_sets() -> Vec<Vec<u16>> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sets = Vec::new();
    for k in 1..=8usize {
        sets.push((0..k as u16).collect());
        sets.push((0..k as u16).map(|x| x * 3 + 100).collect());
        for span in [12, 24] {
            sets.push(sample(&mut rng, span, k).into_iter().map(|x| x as u16 + 1000).collect());
        }
    }
    sets
}

/// Every permutation of every set, fed twice, for `delta_i` in 1..=8.
/// Returns `(sequences, first mismatch)`.
pub fn replay_brute_force() -> (u64, Option<String>) {
    let mut sequences = 0u64;
    let mut mismatch = None;
    for set in counter_sets() {
        for delta_i in 1..=8u16 {
            let mut items = set.clone();
            for_each_permutation(&mut items, &mut |perm| {
                let mut cache = ReplayCache::new(delta_i);
                let mut oracle = ReplayOracle::new(delta_i);
                for &i in perm.iter().chain(perm) {
                    let (got, want) = (cache.admit(i), oracle.admit(i));
                    if got != want && mismatch.is_none() {
                        mismatch = Some(format!("delta_i {delta_i} order {perm:?} at {i}: {got:?} vs {want:?}"));
                    }
                }
                if cache.len() > delta_i as usize + 1 && mismatch.is_none() {
                    mismatch = Some(format!("cache grew to {} with delta_i {delta_i}", cache.len()));
                }
                sequences += 1;
            });
        }
    }
    (sequences, mismatch)
}
