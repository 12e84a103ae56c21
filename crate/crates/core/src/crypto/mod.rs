//! Primitives for both authentication protocols: AES-based MAC and hash,
//! Ed25519 signatures with certificates, nonces and ticket commitments.

mod hash;
pub mod keyfile;
mod mac;
mod sign;

use rand::RngCore;
use thiserror::Error;

pub use hash::{dm_compress, dm_hash, Digest16};
pub use mac::{cbc_mac, fixed_input, mac_tag, mac_verify, Mac8, SymKey, BLOCK_LEN, MAC_LEN};
pub use sign::{
    cert_verify, sig_verify, sign, Certificate, CertificateAuthority, KeyPairAndCert, PublicKey, Signature,
    SigningKey, CERTIFICATE_LEN, PUBLIC_KEY_LEN, SIGNATURE_LEN,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed signature")]
    MalformedSignature,
    #[error("malformed public key")]
    MalformedKey,
    #[error("malformed certificate")]
    MalformedCertificate,
    #[error("key file: {0}")]
    KeyFile(String),
}

pub const NONCE_LEN: usize = 16;

/// Fresh 16-byte random value (`N1`, `N2`, `N3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce(pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut b);
        Nonce(b)
    }
}

/// Ticket-binding commitment: random `r` and `h = dm_hash(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commitment {
    pub r: [u8; 4],
    pub h: Digest16,
}

impl Commitment {
    pub fn new(rng: &mut impl RngCore) -> Self {
        let mut r = [0u8; 4];
        rng.fill_bytes(&mut r);
        Commitment { r, h: dm_hash(&r) }
    }

    pub fn opens(&self) -> bool {
        dm_hash(&self.r) == self.h
    }
}
