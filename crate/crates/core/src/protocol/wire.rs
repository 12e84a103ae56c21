//! Bit-exact request messages for the constrained link.
//!
//! ```text
//! (d) proxy  : ID_s (1) | MAC (8)                        =  9 bytes
//! (e) ticket : r (4) | ID_s (1) | i (2, big-endian) | MAC (8) = 15 bytes
//! ```

use thiserror::Error;

use super::messages::{MsgD, MsgE, Ticket};
use crate::crypto::Mac8;
use crate::ids::ServiceId;

pub const MSG_D_LEN: usize = 9;
pub const MSG_E_LEN: usize = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("wrong request length {0} (expected {MSG_D_LEN} or {MSG_E_LEN})")]
    WrongLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Proxy(MsgD),
    Ticket(MsgE),
}

impl MsgD {
    pub fn to_bytes(&self) -> [u8; MSG_D_LEN] {
        let mut b = [0u8; MSG_D_LEN];
        b[0] = self.service.0;
        b[1..].copy_from_slice(&self.mac.0);
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        let b: &[u8; MSG_D_LEN] = b.try_into().map_err(|_| WireError::WrongLength(b.len()))?;
        Ok(MsgD { service: ServiceId(b[0]), mac: Mac8(b[1..].try_into().expect("8 bytes")) })
    }
}

impl MsgE {
    pub fn to_bytes(&self) -> [u8; MSG_E_LEN] {
        let mut b = [0u8; MSG_E_LEN];
        b[..4].copy_from_slice(&self.r);
        b[4..].copy_from_slice(&self.ticket.to_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        let b: &[u8; MSG_E_LEN] = b.try_into().map_err(|_| WireError::WrongLength(b.len()))?;
        Ok(MsgE {
            r: b[..4].try_into().expect("4 bytes"),
            ticket: Ticket::from_bytes(b[4..].try_into().expect("11 bytes")),
        })
    }
}

pub fn encode_request(req: &Request) -> Vec<u8> {
    match req {
        Request::Proxy(d) => d.to_bytes().to_vec(),
        Request::Ticket(e) => e.to_bytes().to_vec(),
    }
}

/// Dispatches on the exact length.
pub fn decode_request(bytes: &[u8]) -> Result<Request, WireError> {
    match bytes.len() {
        MSG_D_LEN => MsgD::from_bytes(bytes).map(Request::Proxy),
        MSG_E_LEN => MsgE::from_bytes(bytes).map(Request::Ticket),
        n => Err(WireError::WrongLength(n)),
    }
}
