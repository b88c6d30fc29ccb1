//! Core types for the zephyr mix network: wire encoding, the pairing-based
//! identity crypto, symmetric sealing, onion envelopes, and the RPC protocol
//! spoken between nodes.
//!
//! # Design
//!
//! Everything that crosses a socket is defined here so that every node crate
//! shares one encoding. Encoding is little-endian with explicit length
//! prefixes and a leading version byte on every top-level object; decoders
//! consume input exactly and report the offset of the first violation.
//!
//! The crypto layers are deliberately small compositions over well-studied
//! primitives: identity-based encryption in the Boneh-Franklin BasicIdent
//! shape over BLS12-381, XSalsa20-Poly1305 for payload bodies, and X25519 for
//! the per-hop mixer seal. Curve and field arithmetic come from audited
//! libraries; this crate owns only the protocol composition.

pub mod envelope;
pub mod hash;
pub mod ibe;
pub mod ids;
pub mod pairing;
pub mod proto;
pub mod secretbox;
pub mod shuffle;
pub mod sign;
pub mod wire;
