//! Identity-based encryption in the BasicIdent shape.
//!
//! Setup fixes a master secret s and publishes p_pub = s*P. A recipient's
//! private key is d = s*H1(identity). Encryption to an identity picks a
//! random r and masks the plaintext with H2(e(H1(identity), p_pub)^r),
//! shipping u = r*P alongside; decryption recomputes the mask as
//! e(d, u). This is the CPA-secure variant; the seal layer on top pairs it
//! with an authenticated cipher, which is where integrity lives. A CCA
//! transform (FullIdent) would slot into this module if the protocol ever
//! needed the ciphertexts to stand alone.
//!
//! Plaintexts are capped at the 32-byte mask width. The system only ever
//! encrypts 32-byte digests under this scheme.

use std::fmt;

use thiserror::Error;

use crate::hash;
use crate::pairing::PairingSuite;
use crate::wire::{Reader, WireError, Writer};

/// Domain tag for hashing identities onto the curve.
pub const DST_IDENTITY: &[u8] = b"zephyr-h1";

/// Widest plaintext one ciphertext can carry: the H2 mask width.
pub const MAX_PLAINTEXT: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IbeError {
    #[error("plaintext of {len} bytes exceeds the {MAX_PLAINTEXT}-byte mask")]
    PayloadTooLong { len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("identity is not a plausible email address")]
    NotAnEmail,
    #[error("identity exceeds 255 bytes")]
    TooLong,
}

/// A recipient identity: a case-folded email address. Folding happens once,
/// here; everywhere else identities compare byte-exact with no further
/// normalization.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Identity(String);

impl Identity {
    pub fn new(raw: &str) -> Result<Self, IdentityError> {
        let folded = raw.to_lowercase();
        if folded.len() > 255 {
            return Err(IdentityError::TooLong);
        }
        let Some((local, domain)) = folded.split_once('@') else {
            return Err(IdentityError::NotAnEmail);
        };
        let plausible = !local.is_empty()
            && !domain.is_empty()
            && !domain.contains('@')
            && folded.chars().all(|c| !c.is_whitespace() && !c.is_control());
        if !plausible {
            return Err(IdentityError::NotAnEmail);
        }
        Ok(Identity(folded))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identity({})", self.0)
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq)]
pub struct MasterPublicKey<S: PairingSuite> {
    p_pub: S::BasePoint,
}

/// Master secret. Never serialized; it exists only inside the key service
/// process and is dropped on rotation.
pub struct MasterSecretKey<S: PairingSuite> {
    s: S::Scalar,
}

pub struct MasterKeyPair<S: PairingSuite> {
    pub public: MasterPublicKey<S>,
    pub secret: MasterSecretKey<S>,
}

/// Extracted per-identity decryption key.
#[derive(Clone, PartialEq)]
pub struct IdentityPrivateKey<S: PairingSuite> {
    pub identity: Identity,
    d: S::IdPoint,
}

#[derive(Clone, PartialEq, Debug)]
pub struct IbeCiphertext<S: PairingSuite> {
    u: S::BasePoint,
    v: Vec<u8>,
}

pub fn hash_identity<S: PairingSuite>(identity: &Identity) -> S::IdPoint {
    S::hash_to_id(DST_IDENTITY, identity.as_bytes())
}

pub fn setup<S: PairingSuite, R: rand::RngCore + ?Sized>(rng: &mut R) -> MasterKeyPair<S> {
    let s = S::random_scalar(rng);
    let p_pub = S::mul_base(&S::generator(), &s);
    MasterKeyPair {
        public: MasterPublicKey { p_pub },
        secret: MasterSecretKey { s },
    }
}

pub fn extract<S: PairingSuite>(
    msk: &MasterSecretKey<S>,
    identity: &Identity,
) -> IdentityPrivateKey<S> {
    let d = S::mul_id(&hash_identity::<S>(identity), &msk.s);
    IdentityPrivateKey {
        identity: identity.clone(),
        d,
    }
}

/// Checks d against the master public value: e(d, P) == e(H1(identity), p_pub).
/// Both sides equal e(H1(identity), P)^s exactly when d was extracted under
/// the same master secret that produced p_pub.
pub fn verify_key<S: PairingSuite>(
    mpk: &MasterPublicKey<S>,
    key: &IdentityPrivateKey<S>,
) -> bool {
    let lhs = S::pair(&key.d, &S::generator());
    let rhs = S::pair(&hash_identity::<S>(&key.identity), &mpk.p_pub);
    lhs == rhs
}

pub fn encrypt<S: PairingSuite, R: rand::RngCore + ?Sized>(
    mpk: &MasterPublicKey<S>,
    to: &Identity,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<IbeCiphertext<S>, IbeError> {
    if plaintext.len() > MAX_PLAINTEXT {
        return Err(IbeError::PayloadTooLong {
            len: plaintext.len(),
        });
    }
    let r = S::random_scalar(rng);
    let u = S::mul_base(&S::generator(), &r);
    let g_r = S::pair(&hash_identity::<S>(to), &S::mul_base(&mpk.p_pub, &r));
    let mask = hash::pairing_mask(&S::target_bytes(&g_r));
    let v = xor_mask(plaintext, &mask);
    Ok(IbeCiphertext { u, v })
}

/// Unmasks with the pairing of the private key against u. A key for the
/// wrong identity yields uniformly unrelated bytes, not an error; the caller
/// decides what the plaintext should look like.
pub fn decrypt<S: PairingSuite>(
    key: &IdentityPrivateKey<S>,
    ct: &IbeCiphertext<S>,
) -> Vec<u8> {
    let g = S::pair(&key.d, &ct.u);
    let mask = hash::pairing_mask(&S::target_bytes(&g));
    xor_mask(&ct.v, &mask)
}

fn xor_mask(data: &[u8], mask: &[u8; 32]) -> Vec<u8> {
    data.iter().zip(mask).map(|(d, m)| d ^ m).collect()
}

impl<S: PairingSuite> MasterPublicKey<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        S::base_bytes(&self.p_pub)
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        Some(MasterPublicKey {
            p_pub: S::base_from(bytes)?,
        })
    }
}

impl<S: PairingSuite> IdentityPrivateKey<S> {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.str(self.identity.as_str());
        w.bytes(&S::id_bytes(&self.d));
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let at = r.offset();
        let identity = Identity::new(r.str()?)
            .map_err(|_| WireError::malformed(at, "invalid identity"))?;
        let at = r.offset();
        let d = S::id_from(r.bytes()?).ok_or(WireError::malformed(at, "invalid id point"))?;
        r.finish()?;
        Ok(IdentityPrivateKey { identity, d })
    }
}

impl<S: PairingSuite> IbeCiphertext<S> {
    pub fn encode_into(&self, w: &mut Writer) {
        w.bytes(&S::base_bytes(&self.u));
        w.bytes(&self.v);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let at = r.offset();
        let u = S::base_from(r.bytes()?).ok_or(WireError::malformed(at, "invalid base point"))?;
        let v = r.bytes()?.to_vec();
        if v.len() > MAX_PLAINTEXT {
            return Err(WireError::malformed(at, "ciphertext body over mask width"));
        }
        Ok(IbeCiphertext { u, v })
    }
}
