//! Protocol messages and the exact byte strings that get signed or MAC'd.
//!
//! Letters follow the message order of the two protocols:
//!
//! ```text
//! Proxy (P1)                                   Ticket issuer (P2)
//! (a) R -> B : ID_R, N1, F                     (a), (b) as P1
//! (b) R <- B : N2, F, C_B*, S_B(N1, N2)        (c) R -> B : ID_P, ID_S, N3, h, C_R*, S_R(ID_P, ID_S, N2, N3, h)
//! (c) R -> B : ID_S, ID_P, S_R(ID_S, ID_P, N2), C_R*
//! (d) B -> P : ID_S, M_KPB(ID_S, ID_P, i)      (d) R <- B : T, S_B(T, N3)
//!                                              (e) R -> P : r, T
//! ```
//!
//! Every signed or MAC'd input is a fixed-width concatenation of exactly the
//! listed fields; ids and counters are big-endian.

use crate::crypto::{fixed_input, Certificate, Digest16, Mac8, Nonce, Signature};
use crate::ids::{ProviderId, RequesterId, ServiceId};

/// (a) Requester hello.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgA {
    pub requester: RequesterId,
    pub n1: Nonce,
    /// Set when the Requester has no cached Backend certificate.
    pub want_cert: bool,
}

/// (b) Backend challenge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgB {
    pub n2: Nonce,
    /// Set when the Backend has no cached certificate for the Requester.
    pub want_cert: bool,
    pub backend_cert: Option<Certificate>,
    /// `S_B(N1, N2)`
    pub signature: Signature,
}

/// (c) of the proxy protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgC {
    pub service: ServiceId,
    pub provider: ProviderId,
    /// `S_R(ID_S, ID_P, N2)`
    pub signature: Signature,
    pub requester_cert: Option<Certificate>,
}

/// (d) of the proxy protocol, sent over the constrained link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsgD {
    pub service: ServiceId,
    /// `M_KPB(ID_S, ID_P, i)`; the counter itself is not transmitted.
    pub mac: Mac8,
}

/// (c) of the ticket protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgC2 {
    pub provider: ProviderId,
    pub service: ServiceId,
    pub n3: Nonce,
    pub h: Digest16,
    pub requester_cert: Option<Certificate>,
    /// `S_R(ID_P, ID_S, N2, N3, h)`
    pub signature: Signature,
}

/// Single-use permission `T = ID_S, i, M_KPB(ID_P, ID_S, h, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ticket {
    pub service: ServiceId,
    pub counter: u16,
    pub mac: Mac8,
}

impl Ticket {
    pub const LEN: usize = 1 + 2 + 8;

    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let mut b = [0u8; Self::LEN];
        b[0] = self.service.0;
        b[1..3].copy_from_slice(&self.counter.to_be_bytes());
        b[3..].copy_from_slice(&self.mac.0);
        b
    }

    pub fn from_bytes(b: &[u8; Self::LEN]) -> Self {
        Ticket {
            service: ServiceId(b[0]),
            counter: u16::from_be_bytes([b[1], b[2]]),
            mac: Mac8(b[3..].try_into().expect("8 bytes")),
        }
    }
}

/// (d) of the ticket protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgD2 {
    pub ticket: Ticket,
    /// `S_B(T, N3)`
    pub signature: Signature,
}

/// (e) of the ticket protocol, sent over the constrained link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsgE {
    pub r: [u8; 4],
    pub ticket: Ticket,
}

/// Request over an already-authenticated Requester channel.
///
/// Used by the simulator when the asymmetric handshake is abstracted away;
/// a Backend only accepts it when configured to do so.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreAuthRequest {
    pub requester: RequesterId,
    pub service: ServiceId,
    pub provider: ProviderId,
    /// `(N3, h)` for a ticket request; `None` asks the Backend to proxy.
    pub ticket_binding: Option<(Nonce, Digest16)>,
}

/// Baseline: Requester talks straight to the Provider with its certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymRequest {
    pub service: ServiceId,
    pub provider: ProviderId,
    pub counter: u32,
    pub cert: Certificate,
    /// `S_R(ID_S, ID_P, counter)`
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    Hello(MsgA),
    Challenge(MsgB),
    ProxyRequest(MsgC),
    ProxyGrant(MsgD),
    TicketRequest(MsgC2),
    TicketGrant(MsgD2),
    Redeem(MsgE),
    /// The Backend refused to serve this session's request.
    RateLimited,
    PreAuth(PreAuthRequest),
    Asym(AsymRequest),
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Hello(_) => "a",
            ProtocolMessage::Challenge(_) => "b",
            ProtocolMessage::ProxyRequest(_) => "c",
            ProtocolMessage::ProxyGrant(_) => "d",
            ProtocolMessage::TicketRequest(_) => "c2",
            ProtocolMessage::TicketGrant(_) => "d2",
            ProtocolMessage::Redeem(_) => "e",
            ProtocolMessage::RateLimited => "rate-limited",
            ProtocolMessage::PreAuth(_) => "pre-auth",
            ProtocolMessage::Asym(_) => "asym",
        }
    }
}

/// `N1 || N2`
pub fn challenge_transcript(n1: &Nonce, n2: &Nonce) -> [u8; 32] {
    let mut b = [0u8; 32];
    b[..16].copy_from_slice(&n1.0);
    b[16..].copy_from_slice(&n2.0);
    b
}

/// `ID_S || ID_P || N2`
pub fn proxy_request_transcript(service: ServiceId, provider: ProviderId, n2: &Nonce) -> [u8; 21] {
    let mut b = [0u8; 21];
    b[0] = service.0;
    b[1..5].copy_from_slice(&provider.to_bytes());
    b[5..].copy_from_slice(&n2.0);
    b
}

/// `ID_P || ID_S || N2 || N3 || h`
pub fn ticket_request_transcript(
    provider: ProviderId,
    service: ServiceId,
    n2: &Nonce,
    n3: &Nonce,
    h: &Digest16,
) -> [u8; 53] {
    let mut b = [0u8; 53];
    b[..4].copy_from_slice(&provider.to_bytes());
    b[4] = service.0;
    b[5..21].copy_from_slice(&n2.0);
    b[21..37].copy_from_slice(&n3.0);
    b[37..].copy_from_slice(&h.0);
    b
}

/// `T || N3`
pub fn ticket_grant_transcript(ticket: &Ticket, n3: &Nonce) -> [u8; 27] {
    let mut b = [0u8; 27];
    b[..11].copy_from_slice(&ticket.to_bytes());
    b[11..].copy_from_slice(&n3.0);
    b
}

/// `ID_S || ID_P || counter`
pub fn asym_transcript(service: ServiceId, provider: ProviderId, counter: u32) -> [u8; 9] {
    let mut b = [0u8; 9];
    b[0] = service.0;
    b[1..5].copy_from_slice(&provider.to_bytes());
    b[5..].copy_from_slice(&counter.to_be_bytes());
    b
}

/// MAC input of (d): `len || ID_S || ID_P || i`, one AES block.
pub fn proxy_mac_input(service: ServiceId, provider: ProviderId, counter: u16) -> Vec<u8> {
    fixed_input(&[&[service.0], &provider.to_bytes(), &counter.to_be_bytes()])
}

/// MAC input of a ticket: `len || ID_P || ID_S || h || i`, two AES blocks.
pub fn ticket_mac_input(provider: ProviderId, service: ServiceId, h: &Digest16, counter: u16) -> Vec<u8> {
    fixed_input(&[&provider.to_bytes(), &[service.0], &h.0, &counter.to_be_bytes()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_inputs_have_fixed_lengths() {
        assert_eq!(proxy_mac_input(ServiceId(1), ProviderId(2), 3).len(), 8);
        assert_eq!(ticket_mac_input(ProviderId(2), ServiceId(1), &Digest16([0; 16]), 3).len(), 24);
    }

    #[test]
    fn ticket_bytes_round_trip() {
        let t = Ticket { service: ServiceId(9), counter: 0xBEEF, mac: Mac8([1, 2, 3, 4, 5, 6, 7, 8]) };
        assert_eq!(t.to_bytes()[1..3], [0xBE, 0xEF]);
        assert_eq!(Ticket::from_bytes(&t.to_bytes()), t);
    }

    #[test]
    fn transcripts_are_field_concatenations() {
        let n2 = Nonce([7; 16]);
        let t = proxy_request_transcript(ServiceId(1), ProviderId(0x01020304), &n2);
        assert_eq!(t[..5], [1, 1, 2, 3, 4]);
        assert_eq!(t[5..], n2.0);
    }
}
