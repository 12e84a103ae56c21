//! The two Backend-assisted authentication protocols and the direct
//! asymmetric baseline.
//!
//! Each participant is a single-threaded state machine ([`RequesterCore`],
//! [`BackendCore`], [`ProviderCore`]) that consumes one message at a time and
//! returns what should be sent next. Transport is left to the caller; the
//! simulator in [`crate::sim`] is one such caller.

pub mod backend;
pub mod codec;
pub mod messages;
pub mod provider;
pub mod replay;
pub mod requester;
pub mod wire;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use backend::{BackendCore, BackendError, BackendOutput, Grant, GrantKind};
pub use messages::*;
pub use provider::{ProviderConfig, ProviderCore, RejectReason, ServeRecord, Verdict};
pub use replay::{Admit, ReplayCache};
pub use requester::{RequesterCore, RequesterError, RequesterOutput};
pub use wire::{decode_request, encode_request, Request, WireError, MSG_D_LEN, MSG_E_LEN};

/// Certificate subject id used by the Backend.
pub const BACKEND_SUBJECT: u32 = 0xB4C0_0000;

/// One Requester-Backend connection. Sessions are bound to connections, not
/// to the (unauthenticated) id a peer claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolKind {
    /// Backend as a proxy: the Backend sends the MAC'd request to the Provider.
    #[serde(rename = "p1")]
    Proxy,
    /// Backend as ticket issuer: the Requester redeems a single-use ticket.
    #[serde(rename = "p2")]
    Ticket,
    /// Requester signs each request; the Provider verifies it itself.
    #[serde(rename = "asym")]
    Asymmetric,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Proxy, ProtocolKind::Ticket, ProtocolKind::Asymmetric];

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::Proxy => "proxy",
            ProtocolKind::Ticket => "ticket-issuer",
            ProtocolKind::Asymmetric => "asymmetric",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Proxy => "p1",
            ProtocolKind::Ticket => "p2",
            ProtocolKind::Asymmetric => "asym",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p1" | "proxy" => Ok(ProtocolKind::Proxy),
            "p2" | "ticket" => Ok(ProtocolKind::Ticket),
            "asym" | "asymmetric" => Ok(ProtocolKind::Asymmetric),
            other => Err(format!("unknown protocol `{other}` (expected p1, p2 or asym)")),
        }
    }
}
