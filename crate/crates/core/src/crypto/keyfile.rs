//! Hex-encoded key files: one line of lowercase hex, optional trailing newline.

use std::path::Path;

use super::CryptoError;

pub fn read_hex<const N: usize>(path: impl AsRef<Path>) -> Result<[u8; N], CryptoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))?;
    let bytes = hex::decode(text.trim())
        .map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))?;
    bytes.try_into().map_err(|b: Vec<u8>| {
        CryptoError::KeyFile(format!("{}: expected {N} bytes, found {}", path.display(), b.len()))
    })
}

pub fn write_hex(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), CryptoError> {
    let path = path.as_ref();
    std::fs::write(path, format!("{}\n", hex::encode(bytes)))
        .map_err(|e| CryptoError::KeyFile(format!("{}: {e}", path.display())))
}
