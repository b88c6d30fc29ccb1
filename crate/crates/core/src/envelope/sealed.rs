//! The end-to-end recipient seal.
//!
//! The message digest plays two roles: it keys the secretbox around the
//! body, and it is the only thing encrypted under the recipient's identity.
//! Opening is trial decryption: unmask a candidate digest, try the box, and
//! accept only if the recovered plaintext hashes back to the candidate. A
//! mailbox fetch therefore scans records with "not mine" as the common,
//! cheap outcome, and the server learns nothing about which record matched.

use rand::RngCore;

use crate::hash;
use crate::ibe::{self, IbeCiphertext, Identity, IdentityPrivateKey, MasterPublicKey};
use crate::pairing::PairingSuite;
use crate::secretbox::{self, SymKey, SymNonce, NONCE_LEN};
use crate::wire::{Reader, WireError, Writer};

#[derive(Clone, PartialEq, Debug)]
pub struct SealedMessage<S: PairingSuite> {
    /// Message digest, encrypted to the recipient identity.
    pub to_digest: IbeCiphertext<S>,
    pub nonce: SymNonce,
    /// Message body under secretbox keyed by the digest.
    pub body: Vec<u8>,
}

pub fn seal_to_recipient<S: PairingSuite, R: RngCore + ?Sized>(
    mpk: &MasterPublicKey<S>,
    to: &Identity,
    message: &[u8],
    rng: &mut R,
) -> SealedMessage<S> {
    let digest = hash::seal_digest(message);
    let nonce = SymNonce::random(rng);
    let body = secretbox::seal(&SymKey::new(digest), &nonce, message);
    let to_digest = ibe::encrypt(mpk, to, &digest, rng).expect("digest fits the mask");
    SealedMessage {
        to_digest,
        nonce,
        body,
    }
}

/// `None` means "not mine": wrong recipient, wrong round key, or a garbled
/// record. All three are routine during a mailbox scan and deliberately
/// indistinguishable.
pub fn open_as_recipient<S: PairingSuite>(
    key: &IdentityPrivateKey<S>,
    sealed: &SealedMessage<S>,
) -> Option<Vec<u8>> {
    let candidate = ibe::decrypt(key, &sealed.to_digest);
    let candidate: [u8; 32] = candidate.try_into().ok()?;
    let message = secretbox::open(&SymKey::new(candidate), &sealed.nonce, &sealed.body).ok()?;
    (hash::seal_digest(&message) == candidate).then_some(message)
}

impl<S: PairingSuite> SealedMessage<S> {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        self.to_digest.encode_into(&mut w);
        w.raw(&self.nonce.0);
        w.bytes(&self.body);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let to_digest = IbeCiphertext::decode_from(&mut r)?;
        let nonce = SymNonce(r.array::<{ NONCE_LEN }>()?);
        let body = r.bytes()?.to_vec();
        r.finish()?;
        Ok(SealedMessage {
            to_digest,
            nonce,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::{Bls, Toy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    fn setup<S: PairingSuite>(
        seed: u64,
    ) -> (
        crate::ibe::MasterKeyPair<S>,
        IdentityPrivateKey<S>,
        ChaCha20Rng,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let master = ibe::setup::<S, _>(&mut rng);
        let key = ibe::extract(&master.secret, &id("alice@example.com"));
        (master, key, rng)
    }

    #[test]
    fn roundtrip_bls() {
        let (master, alice, mut rng) = setup::<Bls>(1);
        let sealed = seal_to_recipient(&master.public, &id("alice@example.com"), b"hi", &mut rng);
        assert_eq!(open_as_recipient(&alice, &sealed).unwrap(), b"hi");
    }

    #[test]
    fn wrong_recipient_is_not_mine() {
        let (master, _, mut rng) = setup::<Toy>(2);
        let bob = ibe::extract(
            &ibe::setup::<Toy, _>(&mut rng).secret,
            &id("bob@example.com"),
        );
        let own_master_bob = {
            let (m, _, _) = setup::<Toy>(2);
            ibe::extract(&m.secret, &id("bob@example.com"))
        };
        let sealed = seal_to_recipient(&master.public, &id("alice@example.com"), b"hi", &mut rng);
        // same master, different identity
        assert_eq!(open_as_recipient(&own_master_bob, &sealed), None);
        // different master entirely
        assert_eq!(open_as_recipient(&bob, &sealed), None);
    }

    #[test]
    fn stale_round_key_is_not_mine() {
        // same identity, key extracted under a rotated master
        let (master, _, mut rng) = setup::<Toy>(3);
        let next_master = ibe::setup::<Toy, _>(&mut rng);
        let stale = ibe::extract(&master.secret, &id("alice@example.com"));
        let sealed =
            seal_to_recipient(&next_master.public, &id("alice@example.com"), b"hi", &mut rng);
        assert_eq!(open_as_recipient(&stale, &sealed), None);
    }

    #[test]
    fn tampered_body_is_not_mine() {
        let (master, alice, mut rng) = setup::<Bls>(4);
        let mut sealed =
            seal_to_recipient(&master.public, &id("alice@example.com"), b"payload", &mut rng);
        sealed.body[0] ^= 1;
        assert_eq!(open_as_recipient(&alice, &sealed), None);
    }

    #[test]
    fn encoding_roundtrip_and_truncation() {
        let (master, alice, mut rng) = setup::<Bls>(5);
        let sealed = seal_to_recipient(
            &master.public,
            &id("alice@example.com"),
            &[7u8; 300],
            &mut rng,
        );
        let enc = sealed.encode();
        let back = SealedMessage::<Bls>::decode(&enc).unwrap();
        assert_eq!(back, sealed);
        assert_eq!(open_as_recipient(&alice, &back).unwrap(), vec![7u8; 300]);

        for cut in [0, 1, 50, enc.len() - 1] {
            assert!(SealedMessage::<Bls>::decode(&enc[..cut]).is_err());
        }
        let mut longer = enc.clone();
        longer.push(0);
        assert!(SealedMessage::<Bls>::decode(&longer).is_err());
    }

    #[test]
    fn sealed_size_depends_only_on_body_length() {
        let (master, _, mut rng) = setup::<Bls>(6);
        let a = seal_to_recipient(&master.public, &id("a@x.org"), &[0u8; 1024], &mut rng);
        let b = seal_to_recipient(&master.public, &id("someone.else@y.org"), &[1u8; 1024], &mut rng);
        assert_eq!(a.encode().len(), b.encode().len());
    }
}
