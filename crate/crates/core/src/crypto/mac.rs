//! Truncated CBC-MAC over AES-128.
//!
//! CBC-MAC is only secure for messages of one fixed length per key usage.
//! Every caller in this crate MACs a fixed-width, length-prefixed field
//! encoding (see [`fixed_input`]), never attacker-chosen variable-length data.

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::RngCore;
use subtle::ConstantTimeEq;

pub const BLOCK_LEN: usize = 16;
pub const MAC_LEN: usize = 8;

/// 128-bit key shared between a Provider and the Backend (`K_PB`).
///
/// Deliberately not `Serialize` and redacted in `Debug`.
#[derive(Clone)]
pub struct SymKey {
    bytes: [u8; 16],
    cipher: Aes128,
}

impl SymKey {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        SymKey { bytes, cipher: Aes128::new(&GenericArray::from(bytes)) }
    }

    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Self::from_bytes(b)
    }

    /// Raw key bytes, for provisioning into key files only.
    pub fn expose_bytes(&self) -> &[u8; 16] {
        &self.bytes
    }

    pub(crate) fn encrypt_block(&self, block: &mut [u8; BLOCK_LEN]) {
        self.cipher.encrypt_block(GenericArray::from_mut_slice(block));
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

impl PartialEq for SymKey {
    fn eq(&self, other: &Self) -> bool {
        self.bytes.ct_eq(&other.bytes).into()
    }
}

impl Eq for SymKey {}

/// 8-byte authentication tag.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Mac8(pub [u8; MAC_LEN]);

impl Mac8 {
    pub fn ct_eq(&self, other: &Mac8) -> bool {
        self.0.ct_eq(&other.0).into()
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; MAC_LEN];
        rng.fill_bytes(&mut b);
        Mac8(b)
    }
}

impl fmt::Debug for Mac8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mac8({})", hex::encode(self.0))
    }
}

/// Raw CBC-MAC with a zero IV. The message is zero-padded to a whole number
/// of blocks; an empty message is one zero block.
pub fn cbc_mac(key: &SymKey, message: &[u8]) -> [u8; BLOCK_LEN] {
    let mut state = [0u8; BLOCK_LEN];
    let mut chunks = message.chunks(BLOCK_LEN).peekable();
    if chunks.peek().is_none() {
        key.encrypt_block(&mut state);
        return state;
    }
    for chunk in chunks {
        for (s, m) in state.iter_mut().zip(chunk) {
            *s ^= m;
        }
        key.encrypt_block(&mut state);
    }
    state
}

/// First 8 bytes of [`cbc_mac`].
pub fn mac_tag(key: &SymKey, message: &[u8]) -> Mac8 {
    let full = cbc_mac(key, message);
    let mut tag = [0u8; MAC_LEN];
    tag.copy_from_slice(&full[..MAC_LEN]);
    Mac8(tag)
}

/// Recomputes the tag and compares in constant time.
pub fn mac_verify(key: &SymKey, message: &[u8], tag: &Mac8) -> bool {
    mac_tag(key, message).ct_eq(tag)
}

/// `len(fields) || fields` as a single byte-prefixed string. Callers pass a
/// fixed-width concatenation, so each call site MACs exactly one length.
pub fn fixed_input(fields: &[&[u8]]) -> Vec<u8> {
    let len: usize = fields.iter().map(|f| f.len()).sum();
    assert!(len < 256, "MAC input too long for one-byte length prefix");
    let mut out = Vec::with_capacity(1 + len);
    out.push(len as u8);
    for f in fields {
        out.extend_from_slice(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h16(s: &str) -> [u8; 16] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    // FIPS-197 appendix C.1: one block, so the CBC-MAC is E_K(P).
    #[test]
    fn single_block_known_answer() {
        let key = SymKey::from_bytes(h16("000102030405060708090a0b0c0d0e0f"));
        let msg = h16("00112233445566778899aabbccddeeff");
        assert_eq!(cbc_mac(&key, &msg), h16("69c4e0d86a7b0430d8cdb78070b4c55a"));
        assert_eq!(mac_tag(&key, &msg).0, hex::decode("69c4e0d86a7b0430").unwrap()[..]);
    }

    // SP 800-38A F.2.1 CBC-AES128: with IV folded into the first block, the
    // zero-IV CBC-MAC of two blocks is the second ciphertext block.
    #[test]
    fn two_block_known_answer() {
        let key = SymKey::from_bytes(h16("2b7e151628aed2a6abf7158809cf4f3c"));
        let iv = h16("000102030405060708090a0b0c0d0e0f");
        let mut p1 = h16("6bc1bee22e409f96e93d7e117393172a");
        for (a, b) in p1.iter_mut().zip(iv) {
            *a ^= b;
        }
        let p2 = h16("ae2d8a571e03ac9c9eb76fac45af8e51");
        let msg = [p1, p2].concat();
        assert_eq!(cbc_mac(&key, &msg), h16("5086cb9b507219ee95db113a917678b2"));
    }

    #[test]
    fn deterministic() {
        let key = SymKey::from_bytes([7; 16]);
        assert_eq!(mac_tag(&key, b"abc"), mac_tag(&key, b"abc"));
    }

    #[test]
    fn single_bit_flips_change_tag() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let key = SymKey::generate(&mut rng);
            let mut msg = [0u8; 24];
            rng.fill(&mut msg[..]);
            let tag = mac_tag(&key, &msg);
            let bit = rng.gen_range(0..msg.len() * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(mac_tag(&key, &msg), tag);
        }
    }

    #[test]
    fn verify_round_trip_and_wrong_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let k1 = SymKey::generate(&mut rng);
            let k2 = SymKey::generate(&mut rng);
            let msg = fixed_input(&[b"\x01", &[1, 2, 3, 4], &[0, 9]]);
            let tag = mac_tag(&k1, &msg);
            assert!(mac_verify(&k1, &msg, &tag));
            assert!(!mac_verify(&k2, &msg, &tag));
        }
    }

    #[test]
    fn random_tags_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = SymKey::generate(&mut rng);
        let msg = fixed_input(&[b"\x01", &[0, 0, 0, 1], &[0, 0]]);
        for _ in 0..100_000 {
            assert!(!mac_verify(&key, &msg, &Mac8::random(&mut rng)));
        }
    }

    #[test]
    fn fixed_input_prefixes_length() {
        assert_eq!(fixed_input(&[&[9], &[1, 2]]), vec![3, 9, 1, 2]);
    }

    #[test]
    fn debug_redacts_key() {
        let key = SymKey::from_bytes([0xAB; 16]);
        assert!(!format!("{key:?}").to_lowercase().contains("ab"));
    }
}
