//! Requester side of both protocols and of the asymmetric baseline.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::messages::*;
use super::{ConnId, ProtocolKind};
use crate::crypto::{cert_verify, sig_verify, sign, Commitment, KeyPairAndCert, Nonce, PublicKey};
use crate::ids::{ProviderId, RequesterId, ServiceId};

/// How many of its own past nonces a Requester remembers to tell a stale
/// reply apart from a forged one.
const RECENT_NONCES: usize = 8;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RequesterError {
    #[error("no open session on connection {0:?}")]
    UnknownSession(ConnId),
    #[error("bad signature")]
    BadSignature,
    #[error("bad or missing certificate")]
    BadCertificate,
    #[error("reply bound to a different nonce")]
    NonceMismatch,
    #[error("unexpected message `{0}`")]
    UnexpectedMessage(&'static str),
    #[error("protocol {0} has no Backend handshake")]
    NoHandshake(ProtocolKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingRequest {
    protocol: ProtocolKind,
    service: ServiceId,
    provider: ProviderId,
}

#[derive(Debug, Clone, Copy)]
enum Session {
    AwaitChallenge { n1: Nonce, req: PendingRequest },
    AwaitTicket { n3: Nonce, commitment: Commitment, req: PendingRequest },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequesterOutput {
    ToBackend(ProtocolMessage),
    /// Redeem a ticket at the Provider over the constrained link.
    Redeem { provider: ProviderId, msg: MsgE },
    /// The Backend refused the request.
    Throttled,
}

#[derive(Debug)]
pub struct RequesterCore {
    id: RequesterId,
    keys: KeyPairAndCert,
    ca: PublicKey,
    backend_subject: u32,
    backend_key: Option<PublicKey>,
    sessions: BTreeMap<ConnId, Session>,
    recent_n1: VecDeque<Nonce>,
    recent_n3: VecDeque<Nonce>,
    asym_counter: u32,
    rng: ChaCha8Rng,
}

fn remember(ring: &mut VecDeque<Nonce>, n: Nonce) {
    if ring.len() == RECENT_NONCES {
        ring.pop_front();
    }
    ring.push_back(n);
}

impl RequesterCore {
    pub fn new(id: RequesterId, keys: KeyPairAndCert, ca: PublicKey, backend_subject: u32, seed: u64) -> Self {
        RequesterCore {
            id,
            keys,
            ca,
            backend_subject,
            backend_key: None,
            sessions: BTreeMap::new(),
            recent_n1: VecDeque::new(),
            recent_n3: VecDeque::new(),
            asym_counter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn id(&self) -> RequesterId {
        self.id
    }

    pub fn backend_key(&self) -> Option<PublicKey> {
        self.backend_key
    }

    /// Trust `key` as the Backend's without a certificate exchange.
    pub fn pin_backend_key(&mut self, key: PublicKey) {
        self.backend_key = Some(key);
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// Message (a). Replaces any session already open on `conn`.
    pub fn start(
        &mut self,
        conn: ConnId,
        protocol: ProtocolKind,
        service: ServiceId,
        provider: ProviderId,
    ) -> Result<MsgA, RequesterError> {
        if protocol == ProtocolKind::Asymmetric {
            return Err(RequesterError::NoHandshake(protocol));
        }
        let n1 = Nonce::random(&mut self.rng);
        remember(&mut self.recent_n1, n1);
        let req = PendingRequest { protocol, service, provider };
        self.sessions.insert(conn, Session::AwaitChallenge { n1, req });
        Ok(MsgA { requester: self.id, n1, want_cert: self.backend_key.is_none() })
    }

    /// Request over a channel the caller has already authenticated. For the
    /// ticket protocol a commitment is drawn and the session waits for (d).
    pub fn pre_auth(
        &mut self,
        conn: ConnId,
        protocol: ProtocolKind,
        service: ServiceId,
        provider: ProviderId,
    ) -> Result<PreAuthRequest, RequesterError> {
        let req = PendingRequest { protocol, service, provider };
        let ticket_binding = match protocol {
            ProtocolKind::Proxy => None,
            ProtocolKind::Ticket => {
                let (n3, commitment) = self.fresh_ticket_binding();
                self.sessions.insert(conn, Session::AwaitTicket { n3, commitment, req });
                Some((n3, commitment.h))
            }
            ProtocolKind::Asymmetric => return Err(RequesterError::NoHandshake(protocol)),
        };
        Ok(PreAuthRequest { requester: self.id, service, provider, ticket_binding })
    }

    /// Signed request sent straight to the Provider.
    pub fn asym_request(&mut self, service: ServiceId, provider: ProviderId) -> AsymRequest {
        let counter = self.asym_counter;
        self.asym_counter += 1;
        AsymRequest {
            service,
            provider,
            counter,
            cert: self.keys.cert,
            signature: sign(&self.keys.signing, &asym_transcript(service, provider, counter)),
        }
    }

    fn fresh_ticket_binding(&mut self) -> (Nonce, Commitment) {
        let n3 = Nonce::random(&mut self.rng);
        remember(&mut self.recent_n3, n3);
        (n3, Commitment::new(&mut self.rng))
    }

    /// Consumes one Backend message received on `conn`. Any error aborts the
    /// session on that connection.
    pub fn handle(&mut self, conn: ConnId, msg: &ProtocolMessage) -> Result<RequesterOutput, RequesterError> {
        if let ProtocolMessage::RateLimited = msg {
            self.sessions.remove(&conn);
            return Ok(RequesterOutput::Throttled);
        }
        let session = self.sessions.remove(&conn).ok_or(RequesterError::UnknownSession(conn))?;
        match (session, msg) {
            (Session::AwaitChallenge { n1, req }, ProtocolMessage::Challenge(b)) => {
                self.on_challenge(conn, n1, req, b)
            }
            (Session::AwaitTicket { n3, commitment, req }, ProtocolMessage::TicketGrant(d)) => {
                self.on_ticket(n3, commitment, req, d)
            }
            (_, other) => Err(RequesterError::UnexpectedMessage(other.kind())),
        }
    }

    fn on_challenge(
        &mut self,
        conn: ConnId,
        n1: Nonce,
        req: PendingRequest,
        b: &MsgB,
    ) -> Result<RequesterOutput, RequesterError> {
        let backend_key = match &b.backend_cert {
            Some(cert) => {
                if cert.subject != self.backend_subject || !cert_verify(&self.ca, cert) {
                    return Err(RequesterError::BadCertificate);
                }
                cert.public_key
            }
            None => self.backend_key.ok_or(RequesterError::BadCertificate)?,
        };
        if !sig_verify(&backend_key, &challenge_transcript(&n1, &b.n2), &b.signature) {
            let stale = self
                .recent_n1
                .iter()
                .any(|old| sig_verify(&backend_key, &challenge_transcript(old, &b.n2), &b.signature));
            return Err(if stale { RequesterError::NonceMismatch } else { RequesterError::BadSignature });
        }
        self.backend_key = Some(backend_key);
        let requester_cert = b.want_cert.then_some(self.keys.cert);
        let out = match req.protocol {
            ProtocolKind::Proxy => ProtocolMessage::ProxyRequest(MsgC {
                service: req.service,
                provider: req.provider,
                signature: sign(
                    &self.keys.signing,
                    &proxy_request_transcript(req.service, req.provider, &b.n2),
                ),
                requester_cert,
            }),
            ProtocolKind::Ticket => {
                let (n3, commitment) = self.fresh_ticket_binding();
                let t = ticket_request_transcript(req.provider, req.service, &b.n2, &n3, &commitment.h);
                self.sessions.insert(conn, Session::AwaitTicket { n3, commitment, req });
                ProtocolMessage::TicketRequest(MsgC2 {
                    provider: req.provider,
                    service: req.service,
                    n3,
                    h: commitment.h,
                    requester_cert,
                    signature: sign(&self.keys.signing, &t),
                })
            }
            ProtocolKind::Asymmetric => unreachable!("no handshake session is opened for asym"),
        };
        Ok(RequesterOutput::ToBackend(out))
    }

    fn on_ticket(
        &mut self,
        n3: Nonce,
        commitment: Commitment,
        req: PendingRequest,
        d: &MsgD2,
    ) -> Result<RequesterOutput, RequesterError> {
        let key = self.backend_key.ok_or(RequesterError::BadCertificate)?;
        if !sig_verify(&key, &ticket_grant_transcript(&d.ticket, &n3), &d.signature) {
            let stale = self
                .recent_n3
                .iter()
                .any(|old| sig_verify(&key, &ticket_grant_transcript(&d.ticket, old), &d.signature));
            return Err(if stale { RequesterError::NonceMismatch } else { RequesterError::BadSignature });
        }
        if d.ticket.service != req.service {
            return Err(RequesterError::UnexpectedMessage("d2"));
        }
        Ok(RequesterOutput::Redeem { provider: req.provider, msg: MsgE { r: commitment.r, ticket: d.ticket } })
    }
}
