//! Provider: checks a request on the constrained link and serves it.
//!
//! Every received request drains the configured verification cost from the
//! Provider's ledger whether or not it is valid; a served request then drains
//! the service energy on top.

use std::collections::BTreeMap;

use serde::Serialize;

use super::codec;
use super::messages::*;
use super::replay::{Admit, ReplayCache, DEFAULT_DELTA_I};
use super::ProtocolKind;
use crate::crypto::{cert_verify, dm_hash, mac_verify, sig_verify, Digest16, PublicKey, SymKey};
use crate::energy::EnergyLedger;
use crate::ids::{ProviderId, RequesterId, ServiceId};
use crate::limiter::{Decision, DecisionRecord, LimiterTable};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RejectReason {
    /// Wrong length or undecodable.
    Malformed,
    BadMac,
    StaleCounter,
    Replayed,
    OutsideWindow,
    UnknownService,
    BadSignature,
    BadCertificate,
    WrongProvider,
    RateLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Serve(ServiceId),
    Reject(RejectReason),
}

/// A served request. `requester` is only known for the asymmetric baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeRecord {
    pub at: SimTime,
    pub service: ServiceId,
    pub counter: u32,
    pub requester: Option<RequesterId>,
    /// Ticket protocol: the commitment hash the ticket was bound to.
    pub binding: Option<Digest16>,
}

struct Accepted {
    service: ServiceId,
    counter: u32,
    requester: Option<RequesterId>,
    binding: Option<Digest16>,
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub id: ProviderId,
    pub protocol: ProtocolKind,
    /// Joules per received request.
    pub verification_cost: f64,
    pub services: BTreeMap<ServiceId, f64>,
    /// Proxy protocol: how far ahead of the last accepted counter to search,
    /// since the counter is not transmitted.
    pub lookahead: u16,
    /// Ticket protocol: validity distance of the replay cache.
    pub delta_i: u16,
    pub budget: f64,
}

impl ProviderConfig {
    pub fn new(id: ProviderId, protocol: ProtocolKind, services: BTreeMap<ServiceId, f64>, budget: f64) -> Self {
        ProviderConfig {
            id,
            protocol,
            verification_cost: 0.0,
            services,
            lookahead: DEFAULT_DELTA_I,
            delta_i: DEFAULT_DELTA_I,
            budget,
        }
    }
}

#[derive(Debug)]
enum Verifier {
    Proxy { key: SymKey, last: Option<u16> },
    Ticket { key: SymKey, cache: ReplayCache },
    Asymmetric { ca: PublicKey, counters: BTreeMap<u32, u32>, limiter: Option<LimiterTable> },
}

#[derive(Debug)]
pub struct ProviderCore {
    cfg: ProviderConfig,
    verifier: Verifier,
    ledger: EnergyLedger,
    served: Vec<ServeRecord>,
    decisions: Vec<DecisionRecord>,
    handled: u64,
    verification_drained: f64,
    service_drained: f64,
}

impl ProviderCore {
    /// Proxy or ticket Provider sharing `key` with the Backend.
    ///
    /// Panics if `cfg.protocol` is the asymmetric baseline.
    pub fn symmetric(cfg: ProviderConfig, key: SymKey) -> Self {
        let verifier = match cfg.protocol {
            ProtocolKind::Proxy => Verifier::Proxy { key, last: None },
            ProtocolKind::Ticket => Verifier::Ticket { key, cache: ReplayCache::new(cfg.delta_i) },
            ProtocolKind::Asymmetric => panic!("asymmetric Provider needs a CA key"),
        };
        Self::with_verifier(cfg, verifier)
    }

    /// Baseline Provider verifying certificates and signatures itself, with
    /// an optional local rate limiter.
    pub fn asymmetric(mut cfg: ProviderConfig, ca: PublicKey, limiter: Option<LimiterTable>) -> Self {
        cfg.protocol = ProtocolKind::Asymmetric;
        Self::with_verifier(cfg, Verifier::Asymmetric { ca, counters: BTreeMap::new(), limiter })
    }

    fn with_verifier(cfg: ProviderConfig, verifier: Verifier) -> Self {
        ProviderCore {
            ledger: EnergyLedger::new(cfg.budget),
            cfg,
            verifier,
            served: Vec::new(),
            decisions: Vec::new(),
            handled: 0,
            verification_drained: 0.0,
            service_drained: 0.0,
        }
    }

    pub fn id(&self) -> ProviderId {
        self.cfg.id
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.cfg.protocol
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn served(&self) -> &[ServeRecord] {
        &self.served
    }

    /// Local limiter of the asymmetric baseline, if any.
    pub fn limiter(&self) -> Option<&LimiterTable> {
        match &self.verifier {
            Verifier::Asymmetric { limiter, .. } => limiter.as_ref(),
            _ => None,
        }
    }

    /// Limiter decisions of the asymmetric baseline's local limiter.
    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    /// Joules spent on verifying received requests.
    pub fn verification_drained(&self) -> f64 {
        self.verification_drained
    }

    /// Joules spent on serving.
    pub fn service_drained(&self) -> f64 {
        self.service_drained
    }

    pub fn verification_cost(&self) -> f64 {
        self.cfg.verification_cost
    }

    /// Requests received so far, valid or not.
    pub fn handled(&self) -> u64 {
        self.handled
    }

    pub fn replay_cache(&self) -> Option<&ReplayCache> {
        match &self.verifier {
            Verifier::Ticket { cache, .. } => Some(cache),
            _ => None,
        }
    }

    /// Handles raw bytes from the constrained link.
    pub fn handle_bytes(&mut self, bytes: &[u8], now: SimTime) -> Verdict {
        self.handled += 1;
        self.ledger.drain(self.cfg.verification_cost);
        self.verification_drained += self.cfg.verification_cost;
        let outcome = match self.cfg.protocol {
            ProtocolKind::Proxy => MsgD::from_bytes(bytes).map_err(|_| RejectReason::Malformed).and_then(|d| self.check_proxy(&d)),
            ProtocolKind::Ticket => MsgE::from_bytes(bytes).map_err(|_| RejectReason::Malformed).and_then(|e| self.check_ticket(&e)),
            ProtocolKind::Asymmetric => match codec::decode(bytes) {
                Ok(ProtocolMessage::Asym(a)) => self.check_asym(&a, now),
                _ => Err(RejectReason::Malformed),
            },
        };
        match outcome {
            Ok(a) => {
                let e_s = self.cfg.services[&a.service];
                self.ledger.drain(e_s);
                self.service_drained += e_s;
                self.served.push(ServeRecord {
                    at: now,
                    service: a.service,
                    counter: a.counter,
                    requester: a.requester,
                    binding: a.binding,
                });
                Verdict::Serve(a.service)
            }
            Err(reason) => Verdict::Reject(reason),
        }
    }

    pub fn handle_proxy(&mut self, msg: &MsgD, now: SimTime) -> Verdict {
        self.handle_bytes(&msg.to_bytes(), now)
    }

    pub fn handle_ticket(&mut self, msg: &MsgE, now: SimTime) -> Verdict {
        self.handle_bytes(&msg.to_bytes(), now)
    }

    pub fn handle_asym(&mut self, msg: &AsymRequest, now: SimTime) -> Verdict {
        self.handle_bytes(&codec::encode(&ProtocolMessage::Asym(msg.clone())), now)
    }

    fn known_service(&self, service: ServiceId) -> Result<(), RejectReason> {
        if self.cfg.services.contains_key(&service) {
            Ok(())
        } else {
            Err(RejectReason::UnknownService)
        }
    }

    fn check_proxy(&mut self, d: &MsgD) -> Result<Accepted, RejectReason> {
        let id = self.cfg.id;
        let lookahead = self.cfg.lookahead as u32;
        let Verifier::Proxy { key, last } = &mut self.verifier else { unreachable!() };
        let next = last.map_or(0, |l| l as u32 + 1);
        let hit = (next..=(next + lookahead).min(u16::MAX as u32))
            .map(|c| c as u16)
            .find(|&c| mac_verify(key, &proxy_mac_input(d.service, id, c), &d.mac));
        let Some(counter) = hit else {
            let stale = last.is_some_and(|l| {
                (l.saturating_sub(self.cfg.lookahead)..=l)
                    .any(|c| mac_verify(key, &proxy_mac_input(d.service, id, c), &d.mac))
            });
            return Err(if stale { RejectReason::StaleCounter } else { RejectReason::BadMac });
        };
        *last = Some(counter);
        self.known_service(d.service)?;
        Ok(Accepted { service: d.service, counter: counter as u32, requester: None, binding: None })
    }

    fn check_ticket(&mut self, e: &MsgE) -> Result<Accepted, RejectReason> {
        let id = self.cfg.id;
        let h = dm_hash(&e.r);
        let t = &e.ticket;
        let Verifier::Ticket { key, cache } = &mut self.verifier else { unreachable!() };
        if !mac_verify(key, &ticket_mac_input(id, t.service, &h, t.counter), &t.mac) {
            return Err(RejectReason::BadMac);
        }
        if !self.cfg.services.contains_key(&t.service) {
            return Err(RejectReason::UnknownService);
        }
        match cache.admit(t.counter) {
            Admit::Accept => Ok(Accepted { service: t.service, counter: t.counter as u32, requester: None, binding: Some(h) }),
            Admit::Replayed => Err(RejectReason::Replayed),
            Admit::OutsideWindow => Err(RejectReason::OutsideWindow),
        }
    }

    fn check_asym(
        &mut self,
        a: &AsymRequest,
        now: SimTime,
    ) -> Result<Accepted, RejectReason> {
        if a.provider != self.cfg.id {
            return Err(RejectReason::WrongProvider);
        }
        self.known_service(a.service)?;
        let Verifier::Asymmetric { ca, counters, limiter } = &mut self.verifier else { unreachable!() };
        if !cert_verify(ca, &a.cert) {
            return Err(RejectReason::BadCertificate);
        }
        if !sig_verify(&a.cert.public_key, &asym_transcript(a.service, a.provider, a.counter), &a.signature) {
            return Err(RejectReason::BadSignature);
        }
        let subject = a.cert.subject;
        if counters.get(&subject).is_some_and(|&c| a.counter <= c) {
            return Err(RejectReason::StaleCounter);
        }
        counters.insert(subject, a.counter);
        let requester = RequesterId(subject);
        if let Some(l) = limiter {
            let decision = l.check_and_update(requester, a.service, now).map_err(|_| RejectReason::UnknownService)?;
            self.decisions.push(DecisionRecord { at: now, requester, service: a.service, decision });
            if decision == Decision::Dropped {
                return Err(RejectReason::RateLimited);
            }
        }
        Ok(Accepted { service: a.service, counter: a.counter, requester: Some(requester), binding: None })
    }
}
