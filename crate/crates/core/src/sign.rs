//! Node signatures: BLS over the same pairing the encryption layer uses.
//! Secret scalar x, public key x*P in the base group, signature x*H(m) in
//! the id group; verification checks e(sig, P) == e(H(m), pk).
//!
//! Every long-lived node holds one of these keypairs. Its 160-bit overlay id
//! is the hash of the public key, which ties overlay position to key
//! ownership. Directories are signed with the operator-pinned key.

use rand::RngCore;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

use crate::ids::NodeId;
use crate::pairing::{Bls, PairingSuite};

pub const DST_SIGNATURE: &[u8] = b"zephyr-sig";
pub const SIGNATURE_LEN: usize = 48;
pub const PUBLIC_KEY_LEN: usize = 96;

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct VerifyingKey {
    point: <Bls as PairingSuite>::BasePoint,
    bytes: [u8; PUBLIC_KEY_LEN],
}

pub struct Keypair {
    secret: <Bls as PairingSuite>::Scalar,
    pub public: VerifyingKey,
}

impl Keypair {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let secret = Bls::random_scalar(rng);
        let point = Bls::mul_base(&Bls::generator(), &secret);
        let bytes = Bls::base_bytes(&point)
            .try_into()
            .expect("base point length");
        Keypair {
            secret,
            public: VerifyingKey { point, bytes },
        }
    }

    /// Deterministic keypair from a 32-byte seed, for nodes configured with
    /// a stable identity.
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Keypair::generate(&mut ChaCha20Rng::from_seed(seed))
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        let h = Bls::hash_to_id(DST_SIGNATURE, msg);
        let sig = Bls::mul_id(&h, &self.secret);
        Signature(Bls::id_bytes(&sig).try_into().expect("id point length"))
    }

    pub fn node_id(&self) -> NodeId {
        self.public.node_id()
    }
}

impl VerifyingKey {
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let point = Bls::base_from(bytes)?;
        Some(VerifyingKey {
            point,
            bytes: bytes.try_into().ok()?,
        })
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.bytes
    }

    pub fn node_id(&self) -> NodeId {
        NodeId::from_public_key(&self.bytes)
    }

    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let Some(sig_point) = Bls::id_from(&sig.0) else {
            return false;
        };
        let h = Bls::hash_to_id(DST_SIGNATURE, msg);
        Bls::pair(&sig_point, &Bls::generator()) == Bls::pair(&h, &self.point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_roundtrip() {
        let kp = Keypair::generate(&mut ChaCha20Rng::seed_from_u64(1));
        let sig = kp.sign(b"round directory");
        assert!(kp.public.verify(b"round directory", &sig));
    }

    #[test]
    fn verification_rejects_tampering() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let kp = Keypair::generate(&mut rng);
        let other = Keypair::generate(&mut rng);
        let sig = kp.sign(b"message");

        assert!(!kp.public.verify(b"messagf", &sig));
        assert!(!other.public.verify(b"message", &sig));
        let mut bent = sig;
        bent.0[5] ^= 1;
        assert!(!kp.public.verify(b"message", &bent));
        assert!(!kp.public.verify(b"message", &Signature([0xff; SIGNATURE_LEN])));
    }

    #[test]
    fn seeded_keys_are_stable() {
        let a = Keypair::from_seed([9u8; 32]);
        let b = Keypair::from_seed([9u8; 32]);
        assert_eq!(a.public.as_bytes(), b.public.as_bytes());
        assert_eq!(a.node_id(), b.node_id());
        assert_ne!(
            a.public.as_bytes(),
            Keypair::from_seed([10u8; 32]).public.as_bytes()
        );
    }

    #[test]
    fn public_key_bytes_roundtrip() {
        let kp = Keypair::from_seed([3u8; 32]);
        let vk = VerifyingKey::from_bytes(kp.public.as_bytes()).unwrap();
        assert!(vk == kp.public);
        assert_eq!(vk.node_id(), kp.node_id());
        assert!(VerifyingKey::from_bytes(&[0xau8; PUBLIC_KEY_LEN]).is_none());
        assert!(VerifyingKey::from_bytes(&[1, 2, 3]).is_none());
    }
}
