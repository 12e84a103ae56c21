//! Backend: authenticates Requesters, runs the rate limiter and either
//! forwards a MAC'd request to the Provider or issues a ticket.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::messages::*;
use super::ConnId;
use crate::crypto::{cert_verify, mac_tag, sig_verify, sign, Digest16, KeyPairAndCert, Nonce, PublicKey, SymKey};
use crate::ids::{ProviderId, RequesterId, ServiceId};
use crate::limiter::{Decision, DecisionRecord, LimiterError, LimiterTable};
use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no open session on connection {0:?}")]
    UnknownSession(ConnId),
    #[error("bad signature")]
    BadSignature,
    #[error("bad or missing certificate")]
    BadCertificate,
    #[error("unknown provider {0}")]
    UnknownProvider(ProviderId),
    #[error("counter space for {0} exhausted")]
    CounterExhausted(ProviderId),
    #[error("pre-authenticated requests are disabled")]
    PreAuthDisabled,
    #[error("unexpected message `{0}`")]
    UnexpectedMessage(&'static str),
    #[error(transparent)]
    Limiter(#[from] LimiterError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendOutput {
    /// Reply (b) on the same connection.
    Challenge(MsgB),
    /// Proxy (d) for the Provider.
    Proxy { provider: ProviderId, msg: MsgD },
    /// Ticket (d) back to the Requester.
    Ticket(MsgD2),
    /// The limiter dropped the request.
    RateLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantKind {
    Proxy,
    Ticket { h: Digest16 },
}

/// One authorization the Backend MAC'd for a Provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub at: SimTime,
    pub requester: RequesterId,
    pub provider: ProviderId,
    pub service: ServiceId,
    pub counter: u16,
    pub kind: GrantKind,
}

#[derive(Debug)]
struct ProviderLink {
    key: SymKey,
    next_counter: u32,
}

#[derive(Debug, Clone, Copy)]
struct Session {
    requester: RequesterId,
    n2: Nonce,
}

#[derive(Debug)]
pub struct BackendCore {
    keys: KeyPairAndCert,
    ca: PublicKey,
    providers: BTreeMap<ProviderId, ProviderLink>,
    limiter: LimiterTable,
    requester_keys: BTreeMap<RequesterId, PublicKey>,
    sessions: BTreeMap<ConnId, Session>,
    open: BTreeMap<RequesterId, ConnId>,
    grants: Vec<Grant>,
    decisions: Vec<DecisionRecord>,
    channels: BTreeMap<ConnId, RequesterId>,
    accept_pre_auth: bool,
    rng: ChaCha8Rng,
}

impl BackendCore {
    pub fn new(keys: KeyPairAndCert, ca: PublicKey, limiter: LimiterTable, seed: u64) -> Self {
        BackendCore {
            keys,
            ca,
            providers: BTreeMap::new(),
            limiter,
            requester_keys: BTreeMap::new(),
            sessions: BTreeMap::new(),
            open: BTreeMap::new(),
            grants: Vec::new(),
            decisions: Vec::new(),
            channels: BTreeMap::new(),
            accept_pre_auth: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Shares `K_PB` with `provider`; counters start at 0.
    pub fn add_provider(&mut self, provider: ProviderId, key: SymKey) {
        self.providers.insert(provider, ProviderLink { key, next_counter: 0 });
    }

    /// Pre-load a Requester's certified key, as if exchanged earlier.
    pub fn cache_requester_key(&mut self, requester: RequesterId, key: PublicKey) {
        self.requester_keys.insert(requester, key);
    }

    pub fn set_accept_pre_auth(&mut self, on: bool) {
        self.accept_pre_auth = on;
    }

    /// Marks `conn` as already authenticated for `requester`. The binding is
    /// consumed by the next pre-authenticated request on that connection.
    pub fn authenticate_channel(&mut self, conn: ConnId, requester: RequesterId) {
        self.channels.insert(conn, requester);
    }

    /// Every limiter decision so far, in order.
    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.signing.public_key()
    }

    pub fn limiter(&self) -> &LimiterTable {
        &self.limiter
    }

    /// Everything MAC'd so far, in issue order.
    pub fn grants(&self) -> &[Grant] {
        &self.grants
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn next_counter(&self, provider: ProviderId) -> Option<u32> {
        self.providers.get(&provider).map(|p| p.next_counter)
    }

    /// Consumes one message received on `conn` at `now`.
    pub fn handle(&mut self, conn: ConnId, msg: &ProtocolMessage, now: SimTime) -> Result<BackendOutput, BackendError> {
        match msg {
            ProtocolMessage::Hello(a) => Ok(BackendOutput::Challenge(self.on_hello(conn, a))),
            ProtocolMessage::ProxyRequest(c) => {
                let s = self.take_session(conn)?;
                let key = self.requester_key(s.requester, c.requester_cert.as_ref())?;
                let t = proxy_request_transcript(c.service, c.provider, &s.n2);
                if !sig_verify(&key, &t, &c.signature) {
                    return Err(BackendError::BadSignature);
                }
                self.authorize(s.requester, c.provider, c.service, None, now)
            }
            ProtocolMessage::TicketRequest(c) => {
                let s = self.take_session(conn)?;
                let key = self.requester_key(s.requester, c.requester_cert.as_ref())?;
                let t = ticket_request_transcript(c.provider, c.service, &s.n2, &c.n3, &c.h);
                if !sig_verify(&key, &t, &c.signature) {
                    return Err(BackendError::BadSignature);
                }
                self.authorize(s.requester, c.provider, c.service, Some((c.n3, c.h)), now)
            }
            ProtocolMessage::PreAuth(p) => {
                if !self.accept_pre_auth {
                    return Err(BackendError::PreAuthDisabled);
                }
                if self.channels.remove(&conn) != Some(p.requester) {
                    return Err(BackendError::BadCertificate);
                }
                self.authorize(p.requester, p.provider, p.service, p.ticket_binding, now)
            }
            other => Err(BackendError::UnexpectedMessage(other.kind())),
        }
    }

    fn on_hello(&mut self, conn: ConnId, a: &MsgA) -> MsgB {
        // One open session per claimed id and per connection; newest wins.
        if let Some(old) = self.open.insert(a.requester, conn) {
            self.sessions.remove(&old);
        }
        if let Some(prev) = self.sessions.get(&conn) {
            if prev.requester != a.requester {
                self.open.remove(&prev.requester);
            }
        }
        let n2 = Nonce::random(&mut self.rng);
        self.sessions.insert(conn, Session { requester: a.requester, n2 });
        MsgB {
            n2,
            want_cert: !self.requester_keys.contains_key(&a.requester),
            backend_cert: a.want_cert.then_some(self.keys.cert),
            signature: sign(&self.keys.signing, &challenge_transcript(&a.n1, &n2)),
        }
    }

    /// Removes the session whatever the outcome: each `N2` is usable once.
    fn take_session(&mut self, conn: ConnId) -> Result<Session, BackendError> {
        let s = self.sessions.remove(&conn).ok_or(BackendError::UnknownSession(conn))?;
        if self.open.get(&s.requester) == Some(&conn) {
            self.open.remove(&s.requester);
        }
        Ok(s)
    }

    fn requester_key(
        &mut self,
        requester: RequesterId,
        cert: Option<&crate::crypto::Certificate>,
    ) -> Result<PublicKey, BackendError> {
        match cert {
            Some(c) => {
                if c.subject != requester.0 || !cert_verify(&self.ca, c) {
                    return Err(BackendError::BadCertificate);
                }
                self.requester_keys.insert(requester, c.public_key);
                Ok(c.public_key)
            }
            None => self.requester_keys.get(&requester).copied().ok_or(BackendError::BadCertificate),
        }
    }

    fn authorize(
        &mut self,
        requester: RequesterId,
        provider: ProviderId,
        service: ServiceId,
        ticket_binding: Option<(Nonce, Digest16)>,
        now: SimTime,
    ) -> Result<BackendOutput, BackendError> {
        let link = self.providers.get(&provider).ok_or(BackendError::UnknownProvider(provider))?;
        let counter = u16::try_from(link.next_counter).map_err(|_| BackendError::CounterExhausted(provider))?;
        let decision = self.limiter.check_and_update(requester, service, now)?;
        self.decisions.push(DecisionRecord { at: now, requester, service, decision });
        if decision == Decision::Dropped {
            return Ok(BackendOutput::RateLimited);
        }
        let link = self.providers.get_mut(&provider).expect("checked above");
        link.next_counter += 1;
        let (kind, out) = match ticket_binding {
            None => {
                let mac = mac_tag(&link.key, &proxy_mac_input(service, provider, counter));
                (GrantKind::Proxy, BackendOutput::Proxy { provider, msg: MsgD { service, mac } })
            }
            Some((n3, h)) => {
                let mac = mac_tag(&link.key, &ticket_mac_input(provider, service, &h, counter));
                let ticket = Ticket { service, counter, mac };
                let signature = sign(&self.keys.signing, &ticket_grant_transcript(&ticket, &n3));
                (GrantKind::Ticket { h }, BackendOutput::Ticket(MsgD2 { ticket, signature }))
            }
        };
        self.grants.push(Grant { at: now, requester, provider, service, counter, kind });
        Ok(out)
    }
}
