//! Tagged hash functions used across the protocol.
//!
//! Every use gets its own domain tag so no two contexts can produce colliding
//! digests. Tags are hashed as [len u8][tag bytes] before the message.

use sha1::Sha1;
use sha2::{Digest, Sha256};
use sha3::{
    digest::{ExtendableOutput, Update as XofUpdate, XofReader},
    Shake256,
};

/// SHA-1 truncating hash for 160-bit overlay ids. SHA-1 is fine here: ids
/// only need uniform spread over the key space, not collision resistance
/// against an adversary minting keys (an attacker gains nothing from a
/// collision it can't get from just generating more keys).
pub fn hash160(data: &[u8]) -> [u8; 20] {
    let mut h = Sha1::new();
    Digest::update(&mut h, data);
    h.finalize().into()
}

pub fn hash160_tagged(tag: &[u8], data: &[u8]) -> [u8; 20] {
    let mut h = Sha1::new();
    Digest::update(&mut h, [tag.len() as u8]);
    Digest::update(&mut h, tag);
    Digest::update(&mut h, data);
    h.finalize().into()
}

fn sha256_tagged(tag: &[u8], data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    Digest::update(&mut h, [tag.len() as u8]);
    Digest::update(&mut h, tag);
    Digest::update(&mut h, data);
    h.finalize().into()
}

/// Digest of a message body, doubling as the symmetric key that seals it.
pub fn seal_digest(message: &[u8]) -> [u8; 32] {
    sha256_tagged(b"zephyr-seal", message)
}

/// H2: maps a serialized pairing output onto a 32-byte mask for the
/// identity-encryption layer. SHAKE256 so the construction generalizes to
/// other mask widths without a new tag.
pub fn pairing_mask(gt_bytes: &[u8]) -> [u8; 32] {
    let mut h = Shake256::default();
    XofUpdate::update(&mut h, b"\x09zephyr-h2");
    XofUpdate::update(&mut h, gt_bytes);
    let mut out = [0u8; 32];
    h.finalize_xof().read(&mut out);
    out
}

/// Key for one hop of the mixer seal, derived from the raw X25519 shared
/// secret and both public keys so each direction and pairing is distinct.
pub fn hop_key(shared: &[u8; 32], ephemeral_pk: &[u8; 32], receiver_pk: &[u8; 32]) -> [u8; 32] {
    let mut data = Vec::with_capacity(96);
    data.extend_from_slice(shared);
    data.extend_from_slice(ephemeral_pk);
    data.extend_from_slice(receiver_pk);
    sha256_tagged(b"zephyr-hop", &data)
}

/// Uniform 32-byte value from arbitrary context, for salts and derived ids.
pub fn derive32(tag: &[u8], data: &[u8]) -> [u8; 32] {
    sha256_tagged(tag, data)
}
