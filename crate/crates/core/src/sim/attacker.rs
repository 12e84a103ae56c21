//! The adversary: eavesdrops on every legitimate message, injects arbitrary
//! bytes anywhere, and can act as the Requesters whose keys it has stolen.
//!
//! There is deliberately no way for the attacker to delay, drop or rewrite a
//! message that is already in flight, and it never sees the Backend's,
//! Provider's or honest Requesters' keys: the only key material it owns is
//! the [`RequesterCore`]s handed to it at construction.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConnTable, NodeId};
use crate::crypto::{Certificate, Mac8, Nonce, PublicKey, Signature, CERTIFICATE_LEN};
use crate::energy::Burst;
use crate::ids::{ProviderId, RequesterId, ServiceId};
use crate::protocol::codec;
use crate::protocol::*;
use crate::time::{SimDuration, SimTime, MILLIS_PER_DAY};

/// Attack traffic the simulator can schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attack {
    /// One compromised Requester repeats `burst` back to back from `start_day`.
    ChainedBursts { requester: RequesterId, burst: Burst, start_day: u64, end_day: Option<u64> },
    /// Stolen keys used evenly at `per_day` requests per Requester per day.
    CompromisedFlood {
        requesters: Vec<RequesterId>,
        service: ServiceId,
        per_day: f64,
        start_day: u64,
        end_day: Option<u64>,
    },
    /// Well-formed requests with random MACs sent straight to the Provider.
    GarbageInjection { per_second: f64, start_day: u64, end_day: Option<u64> },
    /// Random replays, splices, mutations and forgeries built from what the
    /// attacker has observed, one every `period`, `steps` in total.
    Fuzz { steps: u64, period: SimDuration, start: SimTime },
}

impl Attack {
    /// Compromised identities the attack needs.
    pub fn requesters(&self) -> Vec<RequesterId> {
        match self {
            Attack::ChainedBursts { requester, .. } => vec![*requester],
            Attack::CompromisedFlood { requesters, .. } => requesters.clone(),
            Attack::GarbageInjection { .. } | Attack::Fuzz { .. } => Vec::new(),
        }
    }

    /// Time of the `step`-th action, or `None` once the attack is over.
    pub fn step_time(&self, step: u64) -> Option<SimTime> {
        let (t, end_day) = match self {
            Attack::ChainedBursts { burst, start_day, end_day, .. } => {
                let m = burst.requests as u64;
                let t = SimTime::from_days(*start_day) + burst.window * (step / m) + burst.offset((step % m) as u32);
                (t, *end_day)
            }
            Attack::CompromisedFlood { requesters, per_day, start_day, end_day, .. } => {
                let rate = per_day * requesters.len() as f64;
                if !(rate > 0.0) {
                    return None;
                }
                let ms = (step as f64 * MILLIS_PER_DAY as f64 / rate).round() as u64;
                (SimTime::from_days(*start_day) + SimDuration(ms), *end_day)
            }
            Attack::GarbageInjection { per_second, start_day, end_day } => {
                if !(*per_second > 0.0) {
                    return None;
                }
                let ms = (step as f64 * 1000.0 / per_second).round() as u64;
                (SimTime::from_days(*start_day) + SimDuration(ms), *end_day)
            }
            Attack::Fuzz { steps, period, start } => {
                if step >= *steps {
                    return None;
                }
                (*start + *period * step, None)
            }
        };
        match end_day {
            Some(end) if t >= SimTime::from_days(end) => None,
            _ => Some(t),
        }
    }
}

/// A message as the attacker saw it on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub at: SimTime,
    pub from: NodeId,
    pub to: NodeId,
    pub conn: Option<ConnId>,
    pub bytes: Vec<u8>,
}

/// Something the attacker wants sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: NodeId,
    pub conn: Option<ConnId>,
    pub bytes: Vec<u8>,
    /// Bytes charged on the link; differs from `bytes.len()` only for the
    /// asymmetric baseline's fixed request size.
    pub wire_size: usize,
    /// The sending identity's channel is authenticated (pre-auth mode only,
    /// and only ever for a compromised identity).
    pub channel_auth: Option<RequesterId>,
}

/// What the attacker needs to know about the deployment to craft traffic.
#[derive(Debug, Clone)]
pub struct AttackerContext {
    pub protocol: ProtocolKind,
    pub pre_auth: bool,
    pub provider: ProviderId,
    pub service: ServiceId,
    pub asym_request_size: usize,
    pub requesters: Vec<RequesterId>,
}

#[derive(Debug)]
pub struct Attacker {
    ctx: AttackerContext,
    stolen: BTreeMap<RequesterId, RequesterCore>,
    /// Connections opened by the attacker and the stolen identity using them.
    own_conns: BTreeMap<ConnId, Option<RequesterId>>,
    observed: VecDeque<Observation>,
    capacity: usize,
    observed_total: u64,
    rng: ChaCha8Rng,
}

impl Attacker {
    pub fn new(ctx: AttackerContext, stolen: Vec<RequesterCore>, capacity: usize, rng: ChaCha8Rng) -> Self {
        Attacker {
            ctx,
            stolen: stolen.into_iter().map(|c| (c.id(), c)).collect(),
            own_conns: BTreeMap::new(),
            observed: VecDeque::new(),
            capacity,
            observed_total: 0,
            rng,
        }
    }

    /// Adds a stolen identity.
    pub fn steal(&mut self, core: RequesterCore) {
        self.stolen.insert(core.id(), core);
    }

    pub fn compromised(&self) -> impl Iterator<Item = RequesterId> + '_ {
        self.stolen.keys().copied()
    }

    /// Most recent observations, oldest first.
    pub fn observations(&self) -> &VecDeque<Observation> {
        &self.observed
    }

    pub fn observed_total(&self) -> u64 {
        self.observed_total
    }

    pub fn observe(&mut self, obs: Observation) {
        self.observed_total += 1;
        if self.capacity == 0 {
            return;
        }
        if self.observed.len() == self.capacity {
            self.observed.pop_front();
        }
        self.observed.push_back(obs);
    }

    /// A request from stolen identity `who`, run exactly like the honest
    /// Requester would.
    pub fn request_as(&mut self, who: RequesterId, service: ServiceId, conns: &mut ConnTable) -> Option<Outgoing> {
        let ctx = &self.ctx;
        let core = self.stolen.get_mut(&who)?;
        if ctx.protocol == ProtocolKind::Asymmetric {
            let req = core.asym_request(service, ctx.provider);
            return Some(Outgoing {
                to: NodeId::Provider,
                conn: None,
                bytes: codec::encode(&ProtocolMessage::Asym(req)),
                wire_size: ctx.asym_request_size,
                channel_auth: None,
            });
        }
        let conn = conns.open(NodeId::Attacker);
        self.own_conns.insert(conn, Some(who));
        let (msg, channel_auth) = if ctx.pre_auth {
            let p = core.pre_auth(conn, ctx.protocol, service, ctx.provider).ok()?;
            (ProtocolMessage::PreAuth(p), Some(who))
        } else {
            (ProtocolMessage::Hello(core.start(conn, ctx.protocol, service, ctx.provider).ok()?), None)
        };
        let bytes = codec::encode(&msg);
        Some(Outgoing { to: NodeId::Backend, conn: Some(conn), wire_size: bytes.len(), bytes, channel_auth })
    }

    /// A reply that reached the attacker on one of its connections.
    pub fn on_reply(&mut self, conn: ConnId, bytes: &[u8]) -> Option<Outgoing> {
        let who = (*self.own_conns.get(&conn)?)?;
        let msg = codec::decode(bytes).ok()?;
        let core = self.stolen.get_mut(&who)?;
        match core.handle(conn, &msg).ok()? {
            RequesterOutput::ToBackend(m) => {
                let bytes = codec::encode(&m);
                Some(Outgoing { to: NodeId::Backend, conn: Some(conn), wire_size: bytes.len(), bytes, channel_auth: None })
            }
            RequesterOutput::Redeem { msg, .. } => Some(redeem(msg)),
            RequesterOutput::Throttled => None,
        }
    }

    /// A well-formed request carrying a random MAC or signature.
    pub fn garbage(&mut self) -> Outgoing {
        let rng = &mut self.rng;
        let (bytes, wire_size) = match self.ctx.protocol {
            ProtocolKind::Proxy => {
                let b = MsgD { service: self.ctx.service, mac: Mac8::random(rng) }.to_bytes().to_vec();
                (b, MSG_D_LEN)
            }
            ProtocolKind::Ticket => {
                let ticket = Ticket { service: self.ctx.service, counter: rng.gen(), mac: Mac8::random(rng) };
                (MsgE { r: rng.gen(), ticket }.to_bytes().to_vec(), MSG_E_LEN)
            }
            ProtocolKind::Asymmetric => {
                let req = AsymRequest {
                    service: self.ctx.service,
                    provider: self.ctx.provider,
                    counter: rng.gen(),
                    cert: random_cert(rng),
                    signature: random_sig(rng),
                };
                (codec::encode(&ProtocolMessage::Asym(req)), self.ctx.asym_request_size)
            }
        };
        Outgoing { to: NodeId::Provider, conn: None, bytes, wire_size, channel_auth: None }
    }

    /// One adversarial action assembled from observations and stolen keys.
    pub fn fuzz_step(&mut self, conns: &mut ConnTable) -> Vec<Outgoing> {
        let choice = self.rng.gen_range(0..10);
        let picked = self.pick_observation();
        match (choice, picked) {
            // Verbatim replay to the original destination.
            (0, Some(o)) => vec![plain(o.to, o.conn, o.bytes)],
            // Replay to some other node on some other connection.
            (1, Some(o)) => {
                let to = self.random_node();
                let conn = self.random_conn(conns);
                vec![plain(to, conn, o.bytes)]
            }
            // Bit flips.
            (2, Some(mut o)) if !o.bytes.is_empty() => {
                for _ in 0..self.rng.gen_range(1..=3) {
                    let i = self.rng.gen_range(0..o.bytes.len());
                    o.bytes[i] ^= 1 << self.rng.gen_range(0..8);
                }
                vec![plain(o.to, o.conn, o.bytes)]
            }
            // Splice an observed ticket or proxy MAC into a fresh request.
            (3, Some(o)) => self.splice(&o).into_iter().collect(),
            // Open a session under a victim's id, then push an observed
            // handshake message into it.
            (4, _) => {
                let conn = conns.open(NodeId::Attacker);
                self.own_conns.insert(conn, None);
                let victim = self.random_requester();
                let hello = MsgA { requester: victim, n1: Nonce::random(&mut self.rng), want_cert: self.rng.gen() };
                vec![plain(NodeId::Backend, Some(conn), codec::encode(&ProtocolMessage::Hello(hello)))]
            }
            (5, Some(o)) => {
                let spoofed: Vec<ConnId> = self.own_conns.iter().filter(|(_, w)| w.is_none()).map(|(c, _)| *c).collect();
                if spoofed.is_empty() {
                    return Vec::new();
                }
                let conn = spoofed[self.rng.gen_range(0..spoofed.len())];
                vec![plain(NodeId::Backend, Some(conn), o.bytes)]
            }
            // Legitimate use of a stolen key.
            (6, _) if !self.stolen.is_empty() => {
                let ids: Vec<RequesterId> = self.stolen.keys().copied().collect();
                let who = ids[self.rng.gen_range(0..ids.len())];
                self.request_as(who, self.ctx.service, conns).into_iter().collect()
            }
            // Pre-auth request claiming someone else's id.
            (7, _) => {
                let p = PreAuthRequest {
                    requester: self.random_requester(),
                    service: self.ctx.service,
                    provider: self.ctx.provider,
                    ticket_binding: self.rng.gen::<bool>().then(|| (Nonce::random(&mut self.rng), crate::crypto::dm_hash(&self.rng.gen::<[u8; 4]>()))),
                };
                let conn = self.random_conn(conns);
                vec![plain(NodeId::Backend, conn, codec::encode(&ProtocolMessage::PreAuth(p)))]
            }
            (8, _) => vec![self.garbage()],
            _ => {
                let len = self.rng.gen_range(0..48);
                let mut b = vec![0u8; len];
                self.rng.fill_bytes(&mut b);
                let to = self.random_node();
                let conn = self.random_conn(conns);
                vec![plain(to, conn, b)]
            }
        }
    }

    fn splice(&mut self, o: &Observation) -> Option<Outgoing> {
        match codec::decode(&o.bytes) {
            Ok(ProtocolMessage::TicketGrant(d2)) => {
                // Eavesdropped ticket without knowing r.
                Some(redeem(MsgE { r: self.rng.gen(), ticket: d2.ticket }))
            }
            Ok(ProtocolMessage::TicketRequest(c2)) => {
                // Same ticket request, attacker-chosen commitment.
                let mut c2 = c2;
                c2.h = crate::crypto::dm_hash(&self.rng.gen::<[u8; 4]>());
                Some(plain(NodeId::Backend, o.conn, codec::encode(&ProtocolMessage::TicketRequest(c2))))
            }
            _ => match decode_request(&o.bytes) {
                Ok(Request::Ticket(mut e)) => {
                    match self.rng.gen_range(0..3) {
                        0 => e.r = self.rng.gen(),
                        1 => e.ticket.counter = e.ticket.counter.wrapping_add(self.rng.gen_range(1..4)),
                        _ => e.ticket.service = ServiceId(self.rng.gen()),
                    }
                    Some(redeem(e))
                }
                Ok(Request::Proxy(mut d)) => {
                    d.service = ServiceId(d.service.0.wrapping_add(1));
                    Some(plain(NodeId::Provider, None, d.to_bytes().to_vec()))
                }
                Err(_) => None,
            },
        }
    }

    fn pick_observation(&mut self) -> Option<Observation> {
        if self.observed.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..self.observed.len());
        Some(self.observed[i].clone())
    }

    fn random_requester(&mut self) -> RequesterId {
        let r = &self.ctx.requesters;
        if r.is_empty() {
            RequesterId(self.rng.gen())
        } else {
            r[self.rng.gen_range(0..r.len())]
        }
    }

    fn random_node(&mut self) -> NodeId {
        match self.rng.gen_range(0..3) {
            0 => NodeId::Backend,
            1 => NodeId::Provider,
            _ => NodeId::Requester(self.random_requester()),
        }
    }

    fn random_conn(&mut self, conns: &mut ConnTable) -> Option<ConnId> {
        match self.rng.gen_range(0..3) {
            0 => None,
            1 => conns.random_existing(&mut self.rng),
            _ => {
                let c = conns.open(NodeId::Attacker);
                self.own_conns.insert(c, None);
                Some(c)
            }
        }
    }
}

fn plain(to: NodeId, conn: Option<ConnId>, bytes: Vec<u8>) -> Outgoing {
    Outgoing { to, conn, wire_size: bytes.len(), bytes, channel_auth: None }
}

fn redeem(msg: MsgE) -> Outgoing {
    Outgoing { to: NodeId::Provider, conn: None, bytes: msg.to_bytes().to_vec(), wire_size: MSG_E_LEN, channel_auth: None }
}

fn random_sig(rng: &mut impl RngCore) -> Signature {
    let mut s = [0u8; 64];
    rng.fill_bytes(&mut s);
    Signature(s)
}

fn random_cert(rng: &mut impl RngCore) -> Certificate {
    let mut b = [0u8; CERTIFICATE_LEN];
    rng.fill_bytes(&mut b);
    Certificate::from_bytes(&b).unwrap_or(Certificate {
        subject: 0,
        public_key: PublicKey([0; 32]),
        signature: random_sig(rng),
    })
}
