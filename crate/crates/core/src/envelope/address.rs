//! Forwarding addresses carried inside onion layers.
//!
//! On the open wire an address is variable-width (length-prefixed host).
//! Inside an onion layer it occupies a fixed [`ADDRESS_SLOT_LEN`]-byte slot,
//! zero-padded, so that layer plaintexts depend only on padding bucket and
//! route length, never on how long a hostname is.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::wire::{Reader, WireError, Writer};

/// Widest host string an address may carry. Generous for DNS names and any
/// textual IP form.
pub const MAX_HOST_LEN: usize = 61;

/// kind(1) + host length(4) + host(61) + port(2) + mailbox id(32)
pub const ADDRESS_SLOT_LEN: usize = 100;

pub const MAILBOX_ID_LEN: usize = 32;

const KIND_MIXER: u8 = 1;
const KIND_MAILBOX: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("host must be 1..={MAX_HOST_LEN} printable bytes")]
    BadHost,
    #[error("expected host:port")]
    BadSyntax,
}

/// A dialable network location.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetAddr {
    host: String,
    pub port: u16,
}

impl NetAddr {
    pub fn new(host: &str, port: u16) -> Result<Self, AddressError> {
        if host.is_empty()
            || host.len() > MAX_HOST_LEN
            || host.chars().any(|c| c.is_whitespace() || c.is_control() || c == ':')
        {
            return Err(AddressError::BadHost);
        }
        Ok(NetAddr {
            host: host.to_string(),
            port,
        })
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.str(&self.host);
        w.u16(self.port);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let at = r.offset();
        let host = r.str()?;
        let port = r.u16()?;
        NetAddr::new(host, port).map_err(|_| WireError::malformed(at, "invalid host"))
    }
}

impl fmt::Display for NetAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

impl fmt::Debug for NetAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NetAddr({}:{})", self.host, self.port)
    }
}

impl FromStr for NetAddr {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, AddressError> {
        let (host, port) = s.rsplit_once(':').ok_or(AddressError::BadSyntax)?;
        let port: u16 = port.parse().map_err(|_| AddressError::BadSyntax)?;
        NetAddr::new(host, port)
    }
}

/// Where a peeled packet goes next: onward to another mixer, or up into a
/// mailbox column on the mailbox server.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Address {
    Mixer(NetAddr),
    Mailbox {
        net: NetAddr,
        mailbox_id: [u8; MAILBOX_ID_LEN],
    },
}

impl Address {
    pub fn net(&self) -> &NetAddr {
        match self {
            Address::Mixer(net) => net,
            Address::Mailbox { net, .. } => net,
        }
    }

    pub fn encode_into(&self, w: &mut Writer) {
        match self {
            Address::Mixer(net) => {
                w.u8(KIND_MIXER);
                net.encode_into(w);
            }
            Address::Mailbox { net, mailbox_id } => {
                w.u8(KIND_MAILBOX);
                net.encode_into(w);
                w.raw(mailbox_id);
            }
        }
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let at = r.offset();
        match r.u8()? {
            KIND_MIXER => Ok(Address::Mixer(NetAddr::decode_from(r)?)),
            KIND_MAILBOX => {
                let net = NetAddr::decode_from(r)?;
                let mailbox_id = r.array::<{ MAILBOX_ID_LEN }>()?;
                Ok(Address::Mailbox { net, mailbox_id })
            }
            _ => Err(WireError::malformed(at, "unknown address kind")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let addr = Address::decode_from(&mut r)?;
        r.finish()?;
        Ok(addr)
    }

    /// Fixed-width form used inside onion layers.
    pub fn encode_slot(&self) -> [u8; ADDRESS_SLOT_LEN] {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        let enc = w.finish();
        debug_assert!(enc.len() <= ADDRESS_SLOT_LEN);
        let mut slot = [0u8; ADDRESS_SLOT_LEN];
        slot[..enc.len()].copy_from_slice(&enc);
        slot
    }

    pub fn decode_slot(slot: &[u8]) -> Result<Self, WireError> {
        if slot.len() != ADDRESS_SLOT_LEN {
            return Err(WireError::malformed(0, "address slot length"));
        }
        let mut r = Reader::new(slot);
        let addr = Address::decode_from(&mut r)?;
        let at = r.offset();
        if r.raw(r.remaining())?.iter().any(|&b| b != 0) {
            return Err(WireError::malformed(at, "dirty slot padding"));
        }
        Ok(addr)
    }
}
