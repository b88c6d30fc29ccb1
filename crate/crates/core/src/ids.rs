//! 160-bit identifiers and the XOR metric.
//!
//! Node ids and storage keys share one 160-bit space so nodes and data sort
//! into the same distance order. Distance is bytewise XOR compared as a
//! big-endian unsigned integer.

use std::fmt;

use crate::hash;

pub const ID_LEN: usize = 20;

/// Identity of a node in the overlay: hash160 of its long-term public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub [u8; ID_LEN]);

/// Location of a stored value in the overlay, same space as [`NodeId`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DhtKey(pub [u8; ID_LEN]);

/// XOR distance between two 160-bit ids. Ordered as a big-endian integer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Distance(pub [u8; ID_LEN]);

impl NodeId {
    pub fn from_public_key(pk: &[u8]) -> Self {
        NodeId(hash::hash160(pk))
    }

    pub fn as_bytes(&self) -> &[u8; ID_LEN] {
        &self.0
    }

    /// Where this node itself lives in key space.
    pub fn as_key(&self) -> DhtKey {
        DhtKey(self.0)
    }
}

impl DhtKey {
    /// Key of the barrier list for a round.
    pub fn barrier(round: u64) -> Self {
        DhtKey(hash::hash160_tagged(b"readytomix", &round.to_le_bytes()))
    }

    /// Key under which a mixer publishes its per-round onion key record.
    pub fn mixer_key(mixer: &NodeId, round: u64) -> Self {
        let mut data = Vec::with_capacity(ID_LEN + 8);
        data.extend_from_slice(&mixer.0);
        data.extend_from_slice(&round.to_le_bytes());
        DhtKey(hash::hash160_tagged(b"mixer-key", &data))
    }

    /// Key of the signed round directory.
    pub fn round_directory(round: u64) -> Self {
        DhtKey(hash::hash160_tagged(b"round-dir", &round.to_le_bytes()))
    }

    /// Key of the master public parameters for a round.
    pub fn round_params(round: u64) -> Self {
        DhtKey(hash::hash160_tagged(b"round-params", &round.to_le_bytes()))
    }
}

pub fn distance(a: &[u8; ID_LEN], b: &[u8; ID_LEN]) -> Distance {
    let mut d = [0u8; ID_LEN];
    for i in 0..ID_LEN {
        d[i] = a[i] ^ b[i];
    }
    Distance(d)
}

impl NodeId {
    pub fn distance_to(&self, key: &DhtKey) -> Distance {
        distance(&self.0, &key.0)
    }
}

impl Distance {
    pub const ZERO: Distance = Distance([0u8; ID_LEN]);

    /// Index of the routing bucket this distance falls into: the position of
    /// the highest set bit, 0..160. Zero distance has no bucket.
    pub fn bucket(&self) -> Option<usize> {
        for (i, byte) in self.0.iter().enumerate() {
            if *byte != 0 {
                let bit = 7 - byte.leading_zeros() as usize;
                return Some((ID_LEN - 1 - i) * 8 + bit);
            }
        }
        None
    }
}

macro_rules! hex_fmt {
    ($t:ty) => {
        impl fmt::Debug for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($t), hex::encode(self.0))
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }
    };
}

hex_fmt!(NodeId);
hex_fmt!(DhtKey);
hex_fmt!(Distance);
