//! Ed25519 signatures and a one-level certificate model.

use std::fmt;

use ed25519_dalek::Signer;
use rand::{CryptoRng, RngCore};

use super::CryptoError;

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const CERTIFICATE_LEN: usize = 4 + PUBLIC_KEY_LEN + SIGNATURE_LEN;

/// Private signing key. Redacted in `Debug`, never serialized into messages.
#[derive(Clone)]
pub struct SigningKey(ed25519_dalek::SigningKey);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SigningKey(ed25519_dalek::SigningKey::generate(rng))
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        SigningKey(ed25519_dalek::SigningKey::from_bytes(&seed))
    }

    /// The 32-byte secret seed, for writing key files only.
    pub fn expose_seed(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey(pub={})", hex::encode(self.public_key().0))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes.try_into().map(PublicKey).map_err(|_| CryptoError::MalformedKey)
    }
}

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes.try_into().map(Signature).map_err(|_| CryptoError::MalformedSignature)
    }
}

pub fn sign(key: &SigningKey, message: &[u8]) -> Signature {
    Signature(key.0.sign(message).to_bytes())
}

/// Strict Ed25519 verification; malformed keys verify nothing.
pub fn sig_verify(key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    vk.verify_strict(message, &sig).is_ok()
}

/// Binds a participant id to a public key under the CA's signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Certificate {
    pub subject: u32,
    pub public_key: PublicKey,
    pub signature: Signature,
}

fn cert_body(subject: u32, key: &PublicKey) -> [u8; 4 + PUBLIC_KEY_LEN] {
    let mut b = [0u8; 4 + PUBLIC_KEY_LEN];
    b[..4].copy_from_slice(&subject.to_be_bytes());
    b[4..].copy_from_slice(&key.0);
    b
}

impl Certificate {
    /// `subject (4, big-endian) || public key (32) || CA signature (64)`.
    pub fn to_bytes(&self) -> [u8; CERTIFICATE_LEN] {
        let mut out = [0u8; CERTIFICATE_LEN];
        out[..36].copy_from_slice(&cert_body(self.subject, &self.public_key));
        out[36..].copy_from_slice(&self.signature.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != CERTIFICATE_LEN {
            return Err(CryptoError::MalformedCertificate);
        }
        Ok(Certificate {
            subject: u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")),
            public_key: PublicKey::from_slice(&bytes[4..36])?,
            signature: Signature::from_slice(&bytes[36..])?,
        })
    }
}

pub fn cert_verify(ca: &PublicKey, cert: &Certificate) -> bool {
    sig_verify(ca, &cert_body(cert.subject, &cert.public_key), &cert.signature)
}

/// The single trust anchor. No chains, expiry or revocation.
#[derive(Debug, Clone)]
pub struct CertificateAuthority {
    key: SigningKey,
}

impl CertificateAuthority {
    pub fn new(key: SigningKey) -> Self {
        CertificateAuthority { key }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::new(SigningKey::generate(rng))
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.key
    }

    pub fn issue(&self, subject: u32, key: PublicKey) -> Certificate {
        Certificate { subject, public_key: key, signature: sign(&self.key, &cert_body(subject, &key)) }
    }

    /// Fresh key pair for `subject` with a certificate from this CA.
    pub fn enroll<R: RngCore + CryptoRng>(&self, subject: u32, rng: &mut R) -> KeyPairAndCert {
        let signing = SigningKey::generate(rng);
        let cert = self.issue(subject, signing.public_key());
        KeyPairAndCert { signing, cert }
    }
}

#[derive(Debug, Clone)]
pub struct KeyPairAndCert {
    pub signing: SigningKey,
    pub cert: Certificate,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn round_trip() {
        let k = SigningKey::generate(&mut rng());
        let s = sign(&k, b"N1N2");
        assert!(sig_verify(&k.public_key(), b"N1N2", &s));
    }

    #[test]
    fn tampered_message_or_signature_fails() {
        let k = SigningKey::generate(&mut rng());
        let s = sign(&k, b"hello");
        assert!(!sig_verify(&k.public_key(), b"hellp", &s));
        for bit in [0usize, 100, 511] {
            let mut t = s;
            t.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!sig_verify(&k.public_key(), b"hello", &t));
        }
    }

    #[test]
    fn wrong_key_fails() {
        let mut r = rng();
        let a = SigningKey::generate(&mut r);
        let b = SigningKey::generate(&mut r);
        assert!(!sig_verify(&b.public_key(), b"m", &sign(&a, b"m")));
    }

    #[test]
    fn malformed_lengths() {
        assert_eq!(Signature::from_slice(&[0; 63]), Err(CryptoError::MalformedSignature));
        assert!(Signature::from_slice(&[0; 64]).is_ok());
        assert_eq!(PublicKey::from_slice(&[0; 31]), Err(CryptoError::MalformedKey));
    }

    #[test]
    fn certificates() {
        let mut r = rng();
        let ca = CertificateAuthority::generate(&mut r);
        let kp = ca.enroll(42, &mut r);
        assert!(cert_verify(&ca.public_key(), &kp.cert));

        let mut altered = kp.cert;
        altered.subject = 43;
        assert!(!cert_verify(&ca.public_key(), &altered));

        // Self-signed by a non-CA key.
        let rogue = CertificateAuthority::new(kp.signing.clone()).issue(42, kp.signing.public_key());
        assert!(!cert_verify(&ca.public_key(), &rogue));

        let bytes = kp.cert.to_bytes();
        assert_eq!(Certificate::from_bytes(&bytes).unwrap(), kp.cert);
        assert!(Certificate::from_bytes(&bytes[1..]).is_err());
    }

    #[test]
    fn seeded_keys_are_reproducible() {
        let a = SigningKey::generate(&mut rng());
        let b = SigningKey::generate(&mut rng());
        assert_eq!(a.public_key(), b.public_key());
        assert_eq!(SigningKey::from_seed(a.expose_seed()).public_key(), a.public_key());
    }
}
