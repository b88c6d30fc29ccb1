//! Message envelopes: what a client hands to the first mixer and every
//! transformation between there and the recipient's mailbox.
//!
//! Layering, outermost first:
//!
//! 1. [`OnionPacket`]: one hybrid-sealed hop layer per mixer on the route.
//!    Peeling a layer yields the next hop's address and an opaque inner
//!    blob; the innermost layer yields the mailbox address and a serialized
//!    [`SealedMessage`].
//! 2. [`SealedMessage`]: the end-to-end layer only the recipient can open.
//!    The body is secretbox-sealed under the message's own digest, and that
//!    digest is encrypted to the recipient's identity.
//! 3. The plaintext inside is length-framed and padded to a fixed bucket, so
//!    equal-bucket messages are indistinguishable by size everywhere past
//!    the sender.

mod address;
mod hybrid;
mod onion;
mod padding;
mod sealed;

pub use address::{Address, AddressError, NetAddr, ADDRESS_SLOT_LEN, MAX_HOST_LEN};
pub use hybrid::{
    hybrid_open, hybrid_seal, HybridError, MixerKeyPair, MixerPublicKey, HYBRID_OVERHEAD,
    MIXER_PK_LEN,
};
pub use onion::{
    onion_peel, onion_wrap, OnionError, OnionPacket, PeelError, RouteHop, LAYER_OVERHEAD,
};
pub use padding::{bucket_for, pad, unpad, PadError, MAX_MESSAGE_LEN, PAD_BUCKETS};
pub use sealed::{open_as_recipient, seal_to_recipient, SealedMessage};
