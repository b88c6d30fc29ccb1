//! Per-hop seal: X25519 against the mixer's round key, then secretbox under
//! a derived key. Layout: [ephemeral pk 32][nonce 24][ciphertext+tag].
//!
//! Mixers rotate these keypairs every round; replacing the keypair drops the
//! old secret, which is what makes last round's traffic undecryptable even
//! if a mixer is seized afterwards.

use rand::RngCore;
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

use crate::hash;
use crate::ids::NodeId;
use crate::secretbox::{self, SymError, SymKey, SymNonce, NONCE_LEN, TAG_LEN};

pub const MIXER_PK_LEN: usize = 32;

/// Minimum valid blob: ephemeral key, nonce, empty ciphertext, tag.
pub const HYBRID_OVERHEAD: usize = MIXER_PK_LEN + NONCE_LEN + TAG_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HybridError {
    #[error("blob too short to contain a sealed layer")]
    Malformed,
    #[error("layer failed to open")]
    Open,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MixerPublicKey(pub [u8; MIXER_PK_LEN]);

/// A mixer's onion keypair for one round.
pub struct MixerKeyPair {
    pub mixer_id: NodeId,
    pub public: MixerPublicKey,
    secret: StaticSecret,
}

impl MixerKeyPair {
    pub fn generate<R: RngCore + ?Sized>(mixer_id: NodeId, rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let secret = StaticSecret::from(seed);
        let public = MixerPublicKey(PublicKey::from(&secret).to_bytes());
        MixerKeyPair {
            mixer_id,
            public,
            secret,
        }
    }
}

pub fn hybrid_seal<R: RngCore + ?Sized>(
    to: &MixerPublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let eph = StaticSecret::from(seed);
    let eph_pk = PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&PublicKey::from(to.0));
    let key = SymKey::new(hash::hop_key(shared.as_bytes(), &eph_pk, &to.0));
    let nonce = SymNonce::random(rng);

    let mut out = Vec::with_capacity(HYBRID_OVERHEAD + plaintext.len());
    out.extend_from_slice(&eph_pk);
    out.extend_from_slice(&nonce.0);
    out.extend_from_slice(&secretbox::seal(&key, &nonce, plaintext));
    out
}

pub fn hybrid_open(kp: &MixerKeyPair, blob: &[u8]) -> Result<Vec<u8>, HybridError> {
    if blob.len() < HYBRID_OVERHEAD {
        return Err(HybridError::Malformed);
    }
    let eph_pk: [u8; 32] = blob[..MIXER_PK_LEN].try_into().unwrap();
    let nonce = SymNonce::from_slice(&blob[MIXER_PK_LEN..MIXER_PK_LEN + NONCE_LEN]).unwrap();
    let shared = kp.secret.diffie_hellman(&PublicKey::from(eph_pk));
    if !shared.was_contributory() {
        // low-order ephemeral point: shared secret is attacker-chosen
        return Err(HybridError::Open);
    }
    let key = SymKey::new(hash::hop_key(shared.as_bytes(), &eph_pk, &kp.public.0));
    secretbox::open(&key, &nonce, &blob[MIXER_PK_LEN + NONCE_LEN..]).map_err(|e| match e {
        SymError::Truncated => HybridError::Malformed,
        _ => HybridError::Open,
    })
}
