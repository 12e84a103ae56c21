//! Davies-Meyer hash over AES-128.
//!
//! `H_i = E_{m_i}(H_{i-1}) xor H_{i-1}` with `H_0 = 0`, message blocks used
//! as cipher keys. Messages are padded with `0x80`, zeros, and the 64-bit
//! big-endian bit length (Merkle-Damgard strengthening).

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;

use super::mac::BLOCK_LEN;

/// 16-byte Davies-Meyer digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Digest16(pub [u8; BLOCK_LEN]);

impl fmt::Debug for Digest16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest16({})", hex::encode(self.0))
    }
}

/// One compression step: `E_block(chain) xor chain`.
pub fn dm_compress(chain: [u8; BLOCK_LEN], block: [u8; BLOCK_LEN]) -> [u8; BLOCK_LEN] {
    let cipher = Aes128::new(&GenericArray::from(block));
    let mut out = GenericArray::from(chain);
    cipher.encrypt_block(&mut out);
    let mut next = [0u8; BLOCK_LEN];
    for (n, (o, c)) in next.iter_mut().zip(out.iter().zip(chain)) {
        *n = o ^ c;
    }
    next
}

fn padded(message: &[u8]) -> Vec<u8> {
    let mut out = message.to_vec();
    out.push(0x80);
    while out.len() % BLOCK_LEN != BLOCK_LEN - 8 {
        out.push(0);
    }
    out.extend_from_slice(&((message.len() as u64) * 8).to_be_bytes());
    out
}

pub fn dm_hash(message: &[u8]) -> Digest16 {
    let mut chain = [0u8; BLOCK_LEN];
    for block in padded(message).chunks_exact(BLOCK_LEN) {
        chain = dm_compress(chain, block.try_into().expect("exact chunk"));
    }
    Digest16(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h16(s: &str) -> [u8; 16] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    fn xor(a: [u8; 16], b: [u8; 16]) -> [u8; 16] {
        let mut o = [0; 16];
        for i in 0..16 {
            o[i] = a[i] ^ b[i];
        }
        o
    }

    // AES-128 with all-zero key and plaintext: 66e94bd4ef8a2c3b884cfa59ca342b2e.
    #[test]
    fn compress_zero_known_answer() {
        assert_eq!(dm_compress([0; 16], [0; 16]), h16("66e94bd4ef8a2c3b884cfa59ca342b2e"));
    }

    // FIPS-197 C.1 with the key as message block and the plaintext as chain value.
    #[test]
    fn compress_fips197_known_answer() {
        let chain = h16("00112233445566778899aabbccddeeff");
        let block = h16("000102030405060708090a0b0c0d0e0f");
        let expected = xor(h16("69c4e0d86a7b0430d8cdb78070b4c55a"), chain);
        assert_eq!(dm_compress(chain, block), expected);
    }

    #[test]
    fn four_byte_input_is_one_block() {
        let p = padded(&[1, 2, 3, 4]);
        assert_eq!(p.len(), 16);
        assert_eq!(&p[..5], &[1, 2, 3, 4, 0x80]);
        assert_eq!(&p[8..], &32u64.to_be_bytes());
        assert_eq!(dm_hash(&[1, 2, 3, 4]).0, dm_compress([0; 16], p.try_into().unwrap()));
    }

    #[test]
    fn padding_lengths() {
        for n in 0..64 {
            let p = padded(&vec![0xAA; n]);
            assert_eq!(p.len() % 16, 0);
            assert!(p.len() >= n + 9);
            assert!(p.len() < n + 9 + 16);
        }
    }

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(dm_hash(b"ticket"), dm_hash(b"ticket"));
        assert_ne!(dm_hash(b"ticket"), dm_hash(b"ticker"));
        assert_ne!(dm_hash(b""), dm_hash(&[0]));
    }
}
