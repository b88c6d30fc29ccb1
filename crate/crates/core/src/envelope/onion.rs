//! Route onions. The sender wraps the sealed message in one hybrid layer per
//! route mixer, innermost last. Each layer's plaintext is a fixed-width
//! address slot naming where the inner blob goes next, then the blob itself;
//! the final slot names the recipient's mailbox.
//!
//! Packet length is an affine function of route length and sealed-message
//! length, so equal (bucket, route length) packets are indistinguishable by
//! size at every hop.

use rand::RngCore;
use thiserror::Error;

use super::address::{Address, NetAddr, ADDRESS_SLOT_LEN};
use super::hybrid::{self, HybridError, MixerKeyPair, MixerPublicKey, HYBRID_OVERHEAD};
use crate::wire::{Reader, WireError, Writer};

/// Bytes each onion layer adds on top of its plaintext.
pub const LAYER_OVERHEAD: usize = ADDRESS_SLOT_LEN + HYBRID_OVERHEAD;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnionError {
    #[error("route must contain at least one mixer")]
    EmptyRoute,
    #[error("final address must be a mailbox")]
    NotAMailbox,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeelError {
    /// Could not decrypt: wrong mixer, wrong round key, or damaged blob.
    #[error("layer failed to open")]
    Open,
    /// Opened fine but the plaintext does not parse. Distinct from `Open`
    /// because it implicates the sender, not the key.
    #[error("layer plaintext malformed")]
    Malformed,
}

/// One route position: whose key wraps this layer, and where that mixer
/// dials the next one.
#[derive(Clone, Debug)]
pub struct RouteHop {
    pub key: MixerPublicKey,
    pub addr: NetAddr,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OnionPacket(Vec<u8>);

impl OnionPacket {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        OnionPacket(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.bytes(&self.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let body = r.bytes()?.to_vec();
        r.finish()?;
        Ok(OnionPacket(body))
    }
}

/// Wraps a serialized sealed message for delivery via `route` into `mailbox`.
/// The packet is addressed to `route[0]`; each peel reveals the next hop.
pub fn onion_wrap<R: RngCore + ?Sized>(
    route: &[RouteHop],
    mailbox: Address,
    sealed_bytes: &[u8],
    rng: &mut R,
) -> Result<OnionPacket, OnionError> {
    if route.is_empty() {
        return Err(OnionError::EmptyRoute);
    }
    if !matches!(mailbox, Address::Mailbox { .. }) {
        return Err(OnionError::NotAMailbox);
    }

    let mut plaintext = Vec::with_capacity(ADDRESS_SLOT_LEN + sealed_bytes.len());
    plaintext.extend_from_slice(&mailbox.encode_slot());
    plaintext.extend_from_slice(sealed_bytes);

    for (i, hop) in route.iter().enumerate().rev() {
        let layer = hybrid::hybrid_seal(&hop.key, &plaintext, rng);
        if i == 0 {
            return Ok(OnionPacket(layer));
        }
        plaintext = Vec::with_capacity(ADDRESS_SLOT_LEN + layer.len());
        plaintext.extend_from_slice(&Address::Mixer(route[i].addr.clone()).encode_slot());
        plaintext.extend_from_slice(&layer);
    }
    unreachable!("loop returns at i == 0");
}

/// Removes the layer addressed to `kp`, yielding the forwarding address and
/// the inner blob (the next layer, or the sealed message at a mailbox hop).
pub fn onion_peel(kp: &MixerKeyPair, packet: &[u8]) -> Result<(Address, Vec<u8>), PeelError> {
    let plaintext = hybrid::hybrid_open(kp, packet).map_err(|e| match e {
        HybridError::Malformed => PeelError::Malformed,
        HybridError::Open => PeelError::Open,
    })?;
    if plaintext.len() < ADDRESS_SLOT_LEN {
        return Err(PeelError::Malformed);
    }
    let addr = Address::decode_slot(&plaintext[..ADDRESS_SLOT_LEN])
        .map_err(|_| PeelError::Malformed)?;
    Ok((addr, plaintext[ADDRESS_SLOT_LEN..].to_vec()))
}
