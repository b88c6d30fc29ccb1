//! Authenticated symmetric sealing: XSalsa20-Poly1305 with detached-nothing,
//! tag appended to the ciphertext. The 192-bit nonce is wide enough to draw
//! at random per message without bookkeeping.

use crypto_secretbox::{
    aead::{Aead, KeyInit},
    XSalsa20Poly1305,
};
use rand::RngCore;
use thiserror::Error;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 24;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    /// Ciphertext shorter than a tag: structurally malformed, as opposed to
    /// failing authentication.
    #[error("ciphertext shorter than the authentication tag")]
    Truncated,
    /// Authentication failed. Routine during trial decryption; carries no
    /// detail on purpose.
    #[error("authentication failed")]
    Auth,
}

#[derive(Clone)]
pub struct SymKey([u8; KEY_LEN]);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SymNonce(pub [u8; NONCE_LEN]);

impl SymKey {
    pub fn new(bytes: [u8; KEY_LEN]) -> Self {
        SymKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, SymError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| SymError::Length {
            expected: KEY_LEN,
            got: bytes.len(),
        })?;
        Ok(SymKey(arr))
    }
}

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print key material
        f.write_str("SymKey(..)")
    }
}

impl SymNonce {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut n = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut n);
        SymNonce(n)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, SymError> {
        let arr: [u8; NONCE_LEN] = bytes.try_into().map_err(|_| SymError::Length {
            expected: NONCE_LEN,
            got: bytes.len(),
        })?;
        Ok(SymNonce(arr))
    }
}

/// Ciphertext is plaintext-length + [`TAG_LEN`], deterministic in
/// (key, nonce, plaintext).
pub fn seal(key: &SymKey, nonce: &SymNonce, plaintext: &[u8]) -> Vec<u8> {
    let cipher = XSalsa20Poly1305::new((&key.0).into());
    cipher
        .encrypt((&nonce.0).into(), plaintext)
        .expect("secretbox encryption is infallible for in-memory buffers")
}

pub fn open(key: &SymKey, nonce: &SymNonce, ciphertext: &[u8]) -> Result<Vec<u8>, SymError> {
    if ciphertext.len() < TAG_LEN {
        return Err(SymError::Truncated);
    }
    let cipher = XSalsa20Poly1305::new((&key.0).into());
    cipher
        .decrypt((&nonce.0).into(), ciphertext)
        .map_err(|_| SymError::Auth)
}
