//! Self-describing binary encoding for all protocol messages.
//!
//! ```text
//! frame = tag (u8) | field count (u8) | field*
//! field = length (u16, big-endian) | bytes
//! ```
//!
//! Absent optional certificates are zero-length fields; flags are one byte
//! (0 or 1). The layout is stable: the same message always encodes to the
//! same bytes. The two constrained-link requests additionally have the
//! fixed layouts in [`super::wire`].

use thiserror::Error;

use super::messages::*;
use crate::crypto::{Certificate, Digest16, Mac8, Nonce, Signature, CERTIFICATE_LEN};
use crate::ids::{ProviderId, RequesterId, ServiceId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated frame")]
    Truncated,
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("message {tag:#04x}: expected {expected} fields, found {found}")]
    FieldCount { tag: u8, expected: u8, found: u8 },
    #[error("field {index} has invalid length {len}")]
    FieldLength { index: usize, len: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

mod tag {
    pub const HELLO: u8 = 0x01;
    pub const CHALLENGE: u8 = 0x02;
    pub const PROXY_REQUEST: u8 = 0x03;
    pub const PROXY_GRANT: u8 = 0x04;
    pub const TICKET_REQUEST: u8 = 0x05;
    pub const TICKET_GRANT: u8 = 0x06;
    pub const REDEEM: u8 = 0x07;
    pub const RATE_LIMITED: u8 = 0x08;
    pub const PRE_AUTH: u8 = 0x09;
    pub const ASYM: u8 = 0x0A;
}

struct Frame {
    out: Vec<u8>,
}

impl Frame {
    fn new(tag: u8, fields: u8) -> Self {
        Frame { out: vec![tag, fields] }
    }

    fn field(mut self, bytes: &[u8]) -> Self {
        let len = u16::try_from(bytes.len()).expect("field fits u16");
        self.out.extend_from_slice(&len.to_be_bytes());
        self.out.extend_from_slice(bytes);
        self
    }

    fn cert(self, c: &Option<Certificate>) -> Self {
        match c {
            Some(c) => self.field(&c.to_bytes()),
            None => self.field(&[]),
        }
    }
}

pub fn encode(msg: &ProtocolMessage) -> Vec<u8> {
    use ProtocolMessage::*;
    let f = match msg {
        Hello(m) => Frame::new(tag::HELLO, 3)
            .field(&m.requester.to_bytes())
            .field(&m.n1.0)
            .field(&[m.want_cert as u8]),
        Challenge(m) => Frame::new(tag::CHALLENGE, 4)
            .field(&m.n2.0)
            .field(&[m.want_cert as u8])
            .cert(&m.backend_cert)
            .field(&m.signature.0),
        ProxyRequest(m) => Frame::new(tag::PROXY_REQUEST, 4)
            .field(&[m.service.0])
            .field(&m.provider.to_bytes())
            .field(&m.signature.0)
            .cert(&m.requester_cert),
        ProxyGrant(m) => Frame::new(tag::PROXY_GRANT, 2).field(&[m.service.0]).field(&m.mac.0),
        TicketRequest(m) => Frame::new(tag::TICKET_REQUEST, 6)
            .field(&m.provider.to_bytes())
            .field(&[m.service.0])
            .field(&m.n3.0)
            .field(&m.h.0)
            .cert(&m.requester_cert)
            .field(&m.signature.0),
        TicketGrant(m) => Frame::new(tag::TICKET_GRANT, 2)
            .field(&m.ticket.to_bytes())
            .field(&m.signature.0),
        Redeem(m) => Frame::new(tag::REDEEM, 2).field(&m.r).field(&m.ticket.to_bytes()),
        RateLimited => Frame::new(tag::RATE_LIMITED, 0),
        PreAuth(m) => {
            let f = Frame::new(tag::PRE_AUTH, 5)
                .field(&m.requester.to_bytes())
                .field(&[m.service.0])
                .field(&m.provider.to_bytes());
            match &m.ticket_binding {
                Some((n3, h)) => f.field(&n3.0).field(&h.0),
                None => f.field(&[]).field(&[]),
            }
        }
        Asym(m) => Frame::new(tag::ASYM, 5)
            .field(&[m.service.0])
            .field(&m.provider.to_bytes())
            .field(&m.counter.to_be_bytes())
            .field(&m.cert.to_bytes())
            .field(&m.signature.0),
    };
    f.out
}

struct Fields<'a> {
    items: Vec<&'a [u8]>,
}

impl<'a> Fields<'a> {
    fn exact<const N: usize>(&self, i: usize) -> Result<[u8; N], CodecError> {
        self.items[i]
            .try_into()
            .map_err(|_| CodecError::FieldLength { index: i, len: self.items[i].len() })
    }

    fn flag(&self, i: usize) -> Result<bool, CodecError> {
        match self.exact::<1>(i)? {
            [0] => Ok(false),
            [1] => Ok(true),
            _ => Err(CodecError::FieldLength { index: i, len: 1 }),
        }
    }

    fn cert(&self, i: usize) -> Result<Option<Certificate>, CodecError> {
        match self.items[i].len() {
            0 => Ok(None),
            CERTIFICATE_LEN => Certificate::from_bytes(self.items[i])
                .map(Some)
                .map_err(|_| CodecError::FieldLength { index: i, len: CERTIFICATE_LEN }),
            len => Err(CodecError::FieldLength { index: i, len }),
        }
    }

    fn nonce(&self, i: usize) -> Result<Nonce, CodecError> {
        self.exact(i).map(Nonce)
    }

    fn sig(&self, i: usize) -> Result<Signature, CodecError> {
        self.exact(i).map(Signature)
    }

    fn service(&self, i: usize) -> Result<ServiceId, CodecError> {
        self.exact::<1>(i).map(|[b]| ServiceId(b))
    }

    fn provider(&self, i: usize) -> Result<ProviderId, CodecError> {
        self.exact(i).map(|b| ProviderId(u32::from_be_bytes(b)))
    }

    fn ticket(&self, i: usize) -> Result<Ticket, CodecError> {
        self.exact(i).map(|b| Ticket::from_bytes(&b))
    }
}

fn split(bytes: &[u8]) -> Result<(u8, Fields<'_>), CodecError> {
    let [tag, count, rest @ ..] = bytes else {
        return Err(CodecError::Truncated);
    };
    let mut items = Vec::with_capacity(*count as usize);
    let mut rest = rest;
    for _ in 0..*count {
        let [hi, lo, tail @ ..] = rest else {
            return Err(CodecError::Truncated);
        };
        let len = u16::from_be_bytes([*hi, *lo]) as usize;
        if tail.len() < len {
            return Err(CodecError::Truncated);
        }
        items.push(&tail[..len]);
        rest = &tail[len..];
    }
    if !rest.is_empty() {
        return Err(CodecError::Trailing(rest.len()));
    }
    Ok((*tag, Fields { items }))
}

fn expect_fields(tag: u8, f: &Fields<'_>, expected: u8) -> Result<(), CodecError> {
    let found = f.items.len() as u8;
    if found == expected {
        Ok(())
    } else {
        Err(CodecError::FieldCount { tag, expected, found })
    }
}

pub fn decode(bytes: &[u8]) -> Result<ProtocolMessage, CodecError> {
    let (t, f) = split(bytes)?;
    let want = match t {
        tag::HELLO => 3,
        tag::CHALLENGE => 4,
        tag::PROXY_REQUEST => 4,
        tag::PROXY_GRANT => 2,
        tag::TICKET_REQUEST => 6,
        tag::TICKET_GRANT => 2,
        tag::REDEEM => 2,
        tag::RATE_LIMITED => 0,
        tag::PRE_AUTH => 5,
        tag::ASYM => 5,
        other => return Err(CodecError::UnknownTag(other)),
    };
    expect_fields(t, &f, want)?;
    Ok(match t {
        tag::HELLO => ProtocolMessage::Hello(MsgA {
            requester: RequesterId(u32::from_be_bytes(f.exact(0)?)),
            n1: f.nonce(1)?,
            want_cert: f.flag(2)?,
        }),
        tag::CHALLENGE => ProtocolMessage::Challenge(MsgB {
            n2: f.nonce(0)?,
            want_cert: f.flag(1)?,
            backend_cert: f.cert(2)?,
            signature: f.sig(3)?,
        }),
        tag::PROXY_REQUEST => ProtocolMessage::ProxyRequest(MsgC {
            service: f.service(0)?,
            provider: f.provider(1)?,
            signature: f.sig(2)?,
            requester_cert: f.cert(3)?,
        }),
        tag::PROXY_GRANT => ProtocolMessage::ProxyGrant(MsgD { service: f.service(0)?, mac: Mac8(f.exact(1)?) }),
        tag::TICKET_REQUEST => ProtocolMessage::TicketRequest(MsgC2 {
            provider: f.provider(0)?,
            service: f.service(1)?,
            n3: f.nonce(2)?,
            h: Digest16(f.exact(3)?),
            requester_cert: f.cert(4)?,
            signature: f.sig(5)?,
        }),
        tag::TICKET_GRANT => ProtocolMessage::TicketGrant(MsgD2 { ticket: f.ticket(0)?, signature: f.sig(1)? }),
        tag::REDEEM => ProtocolMessage::Redeem(MsgE { r: f.exact(0)?, ticket: f.ticket(1)? }),
        tag::RATE_LIMITED => ProtocolMessage::RateLimited,
        tag::PRE_AUTH => {
            let binding = match (f.items[3].len(), f.items[4].len()) {
                (0, 0) => None,
                _ => Some((f.nonce(3)?, Digest16(f.exact(4)?))),
            };
            ProtocolMessage::PreAuth(PreAuthRequest {
                requester: RequesterId(u32::from_be_bytes(f.exact(0)?)),
                service: f.service(1)?,
                provider: f.provider(2)?,
                ticket_binding: binding,
            })
        }
        tag::ASYM => ProtocolMessage::Asym(AsymRequest {
            service: f.service(0)?,
            provider: f.provider(1)?,
            counter: u32::from_be_bytes(f.exact(2)?),
            cert: f.cert(3)?.ok_or(CodecError::FieldLength { index: 3, len: 0 })?,
            signature: f.sig(4)?,
        }),
        _ => unreachable!("tag checked above"),
    })
}

/// Encoded size in bytes.
pub fn encoded_len(msg: &ProtocolMessage) -> usize {
    encode(msg).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_limited_is_two_bytes() {
        assert_eq!(encode(&ProtocolMessage::RateLimited), vec![tag::RATE_LIMITED, 0]);
    }

    #[test]
    fn hello_layout() {
        let m = ProtocolMessage::Hello(MsgA { requester: RequesterId(1), n1: Nonce([0xAB; 16]), want_cert: true });
        let b = encode(&m);
        assert_eq!(&b[..6], &[tag::HELLO, 3, 0, 4, 0, 0]);
        assert_eq!(b.len(), 2 + 2 + 4 + 2 + 16 + 2 + 1);
        assert_eq!(decode(&b).unwrap(), m);
    }

    #[test]
    fn malformed_frames() {
        assert_eq!(decode(&[]), Err(CodecError::Truncated));
        assert_eq!(decode(&[0x7F, 0]), Err(CodecError::UnknownTag(0x7F)));
        assert!(matches!(decode(&[tag::HELLO, 1, 0, 0]), Err(CodecError::FieldCount { .. })));
        assert_eq!(decode(&[tag::RATE_LIMITED, 0, 9]), Err(CodecError::Trailing(1)));
        assert_eq!(decode(&[tag::PROXY_GRANT, 2, 0, 5]), Err(CodecError::Truncated));
        // Flag byte other than 0/1.
        let mut b = encode(&ProtocolMessage::Hello(MsgA {
            requester: RequesterId(1),
            n1: Nonce([0; 16]),
            want_cert: false,
        }));
        *b.last_mut().unwrap() = 2;
        assert!(decode(&b).is_err());
    }
}
