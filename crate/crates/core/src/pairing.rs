//! Pairing suites backing the identity-based layer and node signatures.
//!
//! The protocol needs one asymmetric pairing e: G1 x G2 -> GT. Identity
//! hashes, extracted identity keys, and signatures live in the small group
//! (G1 here, 48-byte points); the generator, master public value, and
//! ephemeral encryption points live in G2 (96 bytes). [`Bls`] is the
//! production suite over BLS12-381. [`Toy`] is a pairing over a 1019-element
//! group, small enough to sweep exhaustively in tests and obviously unfit for
//! anything else.

use std::fmt::Debug;

use ark_bls12_381::{Bls12_381, Fr, G1Projective, G2Projective};
use ark_ec::hashing::{
    curve_maps::wb::WBMap, map_to_curve_hasher::MapToCurveBasedHasher, HashToCurve,
};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::Group;
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::Zero;
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::RngCore;
use sha2::Sha256;

pub trait PairingSuite: Clone + Debug + 'static {
    /// Group of identity hashes, extracted keys, and signatures.
    type IdPoint: Clone + PartialEq + Debug;
    /// Group of the public generator and ephemeral points.
    type BasePoint: Clone + PartialEq + Debug;
    type Scalar: Clone + PartialEq + Debug;
    type Target: Clone + PartialEq + Debug;

    const NAME: &'static str;
    const SCALAR_LEN: usize;
    const ID_POINT_LEN: usize;
    const BASE_POINT_LEN: usize;

    /// Uniform nonzero scalar.
    fn random_scalar<R: RngCore + ?Sized>(rng: &mut R) -> Self::Scalar;
    fn generator() -> Self::BasePoint;
    fn mul_base(p: &Self::BasePoint, s: &Self::Scalar) -> Self::BasePoint;
    fn mul_id(p: &Self::IdPoint, s: &Self::Scalar) -> Self::IdPoint;
    /// Hash onto the id group, domain-separated by `dst`.
    fn hash_to_id(dst: &[u8], msg: &[u8]) -> Self::IdPoint;
    fn pair(a: &Self::IdPoint, b: &Self::BasePoint) -> Self::Target;

    fn target_bytes(t: &Self::Target) -> Vec<u8>;
    fn scalar_bytes(s: &Self::Scalar) -> Vec<u8>;
    fn scalar_from(bytes: &[u8]) -> Option<Self::Scalar>;
    fn id_bytes(p: &Self::IdPoint) -> Vec<u8>;
    fn id_from(bytes: &[u8]) -> Option<Self::IdPoint>;
    fn base_bytes(p: &Self::BasePoint) -> Vec<u8>;
    fn base_from(bytes: &[u8]) -> Option<Self::BasePoint>;
}

/// BLS12-381 suite. G1 for identities and signatures, G2 for the generator
/// side, compressed point encodings throughout.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Bls;

type G1Hasher =
    MapToCurveBasedHasher<G1Projective, DefaultFieldHasher<Sha256, 128>, WBMap<ark_bls12_381::g1::Config>>;

impl PairingSuite for Bls {
    type IdPoint = G1Projective;
    type BasePoint = G2Projective;
    type Scalar = Fr;
    type Target = PairingOutput<Bls12_381>;

    const NAME: &'static str = "bls12-381";
    const SCALAR_LEN: usize = 32;
    const ID_POINT_LEN: usize = 48;
    const BASE_POINT_LEN: usize = 96;

    fn random_scalar<R: RngCore + ?Sized>(rng: &mut R) -> Fr {
        loop {
            let s = <Fr as ark_std::UniformRand>::rand(rng);
            if s != Fr::from(0u64) {
                return s;
            }
        }
    }

    fn generator() -> G2Projective {
        G2Projective::generator()
    }

    fn mul_base(p: &G2Projective, s: &Fr) -> G2Projective {
        *p * *s
    }

    fn mul_id(p: &G1Projective, s: &Fr) -> G1Projective {
        *p * *s
    }

    fn hash_to_id(dst: &[u8], msg: &[u8]) -> G1Projective {
        // Hasher construction only depends on the dst; cheap relative to the
        // map itself.
        let hasher = G1Hasher::new(dst).expect("hash-to-curve setup");
        hasher.hash(msg).expect("hash-to-curve").into()
    }

    fn pair(a: &G1Projective, b: &G2Projective) -> Self::Target {
        Bls12_381::pairing(*a, *b)
    }

    fn target_bytes(t: &Self::Target) -> Vec<u8> {
        ser(t)
    }

    fn scalar_bytes(s: &Fr) -> Vec<u8> {
        ser(s)
    }

    fn scalar_from(bytes: &[u8]) -> Option<Fr> {
        de(bytes)
    }

    fn id_bytes(p: &G1Projective) -> Vec<u8> {
        ser(p)
    }

    fn id_from(bytes: &[u8]) -> Option<G1Projective> {
        // No honest protocol point is the identity (hash outputs and s*P
        // with nonzero s never are), so reject it at the boundary; the
        // deserializer itself accepts infinity encodings.
        de(bytes).filter(|p: &G1Projective| !p.is_zero())
    }

    fn base_bytes(p: &G2Projective) -> Vec<u8> {
        ser(p)
    }

    fn base_from(bytes: &[u8]) -> Option<G2Projective> {
        de(bytes).filter(|p: &G2Projective| !p.is_zero())
    }
}

fn ser<T: CanonicalSerialize>(v: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.compressed_size());
    v.serialize_compressed(&mut out).expect("serialize to vec");
    out
}

fn de<T: CanonicalDeserialize>(bytes: &[u8]) -> Option<T> {
    // arkworks validates curve and subgroup membership on deserialize.
    T::deserialize_compressed(bytes).ok()
}

/// Test-only pairing over tiny groups: the "curve" groups are Z_q additive
/// with q = 1019 and the target group is the order-q subgroup of Z_p* with
/// p = 2q + 1 = 2039, generated by 4. e(a, b) = 4^(a*b) mod p, which is
/// bilinear by construction. Secrets are brute-forceable in microseconds;
/// the point is exhaustive protocol tests, not security.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Toy;

pub const TOY_Q: u16 = 1019;
pub const TOY_P: u32 = 2039;
const TOY_GT_GEN: u32 = 4;

fn toy_pow(exp: u32) -> u16 {
    let mut result: u64 = 1;
    let mut base: u64 = TOY_GT_GEN as u64;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % TOY_P as u64;
        }
        base = base * base % TOY_P as u64;
        e >>= 1;
    }
    result as u16
}

impl PairingSuite for Toy {
    type IdPoint = u16;
    type BasePoint = u16;
    type Scalar = u16;
    type Target = u16;

    const NAME: &'static str = "toy-1019";
    const SCALAR_LEN: usize = 2;
    const ID_POINT_LEN: usize = 2;
    const BASE_POINT_LEN: usize = 2;

    fn random_scalar<R: RngCore + ?Sized>(rng: &mut R) -> u16 {
        // rejection-free uniform draw is not worth it at this size; modulo
        // bias over a u32 draw is ~2^-22 and this suite is test-only
        (rng.next_u32() % (TOY_Q as u32 - 1) + 1) as u16
    }

    fn generator() -> u16 {
        1
    }

    fn mul_base(p: &u16, s: &u16) -> u16 {
        ((*p as u32 * *s as u32) % TOY_Q as u32) as u16
    }

    fn mul_id(p: &u16, s: &u16) -> u16 {
        Self::mul_base(p, s)
    }

    fn hash_to_id(dst: &[u8], msg: &[u8]) -> u16 {
        let mut data = Vec::with_capacity(1 + dst.len() + msg.len());
        data.push(dst.len() as u8);
        data.extend_from_slice(dst);
        data.extend_from_slice(msg);
        let d = crate::hash::derive32(b"toy-h", &data);
        let x = u64::from_le_bytes(d[..8].try_into().unwrap());
        // avoid the identity element: a zero hash would satisfy any pairing
        // equation trivially
        (x % (TOY_Q as u64 - 1) + 1) as u16
    }

    fn pair(a: &u16, b: &u16) -> u16 {
        toy_pow(*a as u32 * *b as u32)
    }

    fn target_bytes(t: &u16) -> Vec<u8> {
        t.to_le_bytes().to_vec()
    }

    fn scalar_bytes(s: &u16) -> Vec<u8> {
        s.to_le_bytes().to_vec()
    }

    fn scalar_from(bytes: &[u8]) -> Option<u16> {
        let v = u16::from_le_bytes(bytes.try_into().ok()?);
        (v < TOY_Q).then_some(v)
    }

    fn id_bytes(p: &u16) -> Vec<u8> {
        p.to_le_bytes().to_vec()
    }

    fn id_from(bytes: &[u8]) -> Option<u16> {
        Self::scalar_from(bytes).filter(|&v| v != 0)
    }

    fn base_bytes(p: &u16) -> Vec<u8> {
        p.to_le_bytes().to_vec()
    }

    fn base_from(bytes: &[u8]) -> Option<u16> {
        Self::scalar_from(bytes).filter(|&v| v != 0)
    }
}
