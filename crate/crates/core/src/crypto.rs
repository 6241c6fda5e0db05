//! Labelled hashing and authenticated sealing shared by every module.
//!
//! All hash inputs go through [`encode_labeled`]: a 2-byte big-endian label
//! length, the label, then each field as a 4-byte big-endian length followed by
//! its bytes. Nothing is hashed without a label.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// The authenticated cipher rejected the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("authenticated decryption failed")]
pub struct SealError;

pub fn encode_labeled(label: &str, fields: &[&[u8]]) -> Vec<u8> {
    let label = label.as_bytes();
    let total = 2 + label.len() + fields.iter().map(|f| 4 + f.len()).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&(label.len() as u16).to_be_bytes());
    out.extend_from_slice(label);
    for field in fields {
        out.extend_from_slice(&(field.len() as u32).to_be_bytes());
        out.extend_from_slice(field);
    }
    out
}

/// SHA-256 over the labelled encoding of `fields`.
pub fn labeled_hash(label: &str, fields: &[&[u8]]) -> [u8; DIGEST_LEN] {
    Sha256::digest(encode_labeled(label, fields)).into()
}

/// Counter-mode expansion: `SHA-256(u32be(i) || encoded)` for i = 0, 1, ...
/// concatenated and truncated to `len` bytes.
pub fn expand(label: &str, fields: &[&[u8]], len: usize) -> Vec<u8> {
    let encoded = encode_labeled(label, fields);
    let mut out = Vec::with_capacity(len + DIGEST_LEN);
    let mut counter: u32 = 0;
    while out.len() < len {
        let mut hasher = Sha256::new();
        hasher.update(counter.to_be_bytes());
        hasher.update(&encoded);
        out.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && bool::from(a.ct_eq(b))
}

/// ChaCha20-Poly1305 seal. Output is ciphertext followed by the 16-byte tag.
pub fn seal(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(key.into());
    cipher
        .encrypt(nonce.into(), Payload { msg: plaintext, aad })
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers")
}

pub fn open(
    key: &[u8; KEY_LEN],
    nonce: &[u8; NONCE_LEN],
    aad: &[u8],
    sealed: &[u8],
) -> Result<Vec<u8>, SealError> {
    if sealed.len() < TAG_LEN {
        return Err(SealError);
    }
    let cipher = ChaCha20Poly1305::new(key.into());
    cipher
        .decrypt(nonce.into(), Payload { msg: sealed, aad })
        .map_err(|_| SealError)
}
