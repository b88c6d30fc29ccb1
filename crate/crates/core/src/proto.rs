//! The RPC protocol. One frame shape for everything:
//! [version][opcode][request id u64][body], with the body layout fixed per
//! opcode. Responses echo the request id; nodes never correlate by timing.
//!
//! Caps on list lengths here are wire-sanity limits, not protocol policy;
//! policy limits (value sizes, batch caps) are enforced by the receiving
//! node where context exists.

use thiserror::Error;

use crate::envelope::{Address, MixerPublicKey, NetAddr, MIXER_PK_LEN};
use crate::hash;
use crate::ibe::Identity;
use crate::ids::{DhtKey, NodeId, ID_LEN};
use crate::sign::{Keypair, Signature, VerifyingKey, SIGNATURE_LEN};
use crate::wire::{Reader, WireError, Writer, WIRE_VERSION};

pub const MAX_CONTACTS: usize = 64;
pub const MAX_VALUES: usize = 256;
pub const MAX_STREAM_PACKETS: usize = 8192;
pub const MAX_FETCH_RECORDS: usize = 8192;
/// Largest value the overlay stores under one key.
pub const MAX_DHT_VALUE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    // overlay
    Ping = 0x10,
    Pong = 0x11,
    Store = 0x12,
    StoreOk = 0x13,
    FindNode = 0x14,
    FindNodeOk = 0x15,
    FindValue = 0x16,
    FindValueOk = 0x17,
    // mixing
    Submit = 0x20,
    SubmitOk = 0x21,
    ForwardStream = 0x22,
    StreamOk = 0x23,
    // mailboxes
    Append = 0x30,
    AppendOk = 0x31,
    FetchAll = 0x32,
    FetchAllOk = 0x33,
    Purge = 0x34,
    PurgeOk = 0x35,
    // key service
    BeginAuth = 0x40,
    BeginAuthOk = 0x41,
    CompleteAuth = 0x42,
    CompleteAuthOk = 0x43,
    GetParams = 0x44,
    GetParamsOk = 0x45,
    // info nodes
    PublishKey = 0x50,
    PublishKeyOk = 0x51,
    PublishParams = 0x52,
    PublishParamsOk = 0x53,
    FetchBundle = 0x54,
    FetchBundleOk = 0x55,
    // round coordination
    Register = 0x60,
    RegisterOk = 0x61,
    OpenRound = 0x62,
    OpenRoundOk = 0x63,
    CloseRound = 0x64,
    CloseRoundOk = 0x65,
    TriggerRotation = 0x66,
    Rotated = 0x67,
    ReportDone = 0x68,
    ReportOk = 0x69,
    Heartbeat = 0x6a,
    HeartbeatOk = 0x6b,
    Takeover = 0x6c,
    TakeoverOk = 0x6d,
    Handoff = 0x6e,
    HandoffOk = 0x6f,
    // diagnostics
    GetMetrics = 0x70,
    MetricsOk = 0x71,
    Error = 0x7f,
}

impl Opcode {
    pub fn from_u8(v: u8) -> Option<Opcode> {
        use Opcode::*;
        Some(match v {
            0x10 => Ping,
            0x11 => Pong,
            0x12 => Store,
            0x13 => StoreOk,
            0x14 => FindNode,
            0x15 => FindNodeOk,
            0x16 => FindValue,
            0x17 => FindValueOk,
            0x20 => Submit,
            0x21 => SubmitOk,
            0x22 => ForwardStream,
            0x23 => StreamOk,
            0x30 => Append,
            0x31 => AppendOk,
            0x32 => FetchAll,
            0x33 => FetchAllOk,
            0x34 => Purge,
            0x35 => PurgeOk,
            0x40 => BeginAuth,
            0x41 => BeginAuthOk,
            0x42 => CompleteAuth,
            0x43 => CompleteAuthOk,
            0x44 => GetParams,
            0x45 => GetParamsOk,
            0x50 => PublishKey,
            0x51 => PublishKeyOk,
            0x52 => PublishParams,
            0x53 => PublishParamsOk,
            0x54 => FetchBundle,
            0x55 => FetchBundleOk,
            0x60 => Register,
            0x61 => RegisterOk,
            0x62 => OpenRound,
            0x63 => OpenRoundOk,
            0x64 => CloseRound,
            0x65 => CloseRoundOk,
            0x66 => TriggerRotation,
            0x67 => Rotated,
            0x68 => ReportDone,
            0x69 => ReportOk,
            0x6a => Heartbeat,
            0x6b => HeartbeatOk,
            0x6c => Takeover,
            0x6d => TakeoverOk,
            0x6e => Handoff,
            0x6f => HandoffOk,
            0x70 => GetMetrics,
            0x71 => MetricsOk,
            0x7f => Error,
            _ => return None,
        })
    }

    /// Responses echo a request id; requests allocate one.
    pub fn is_response(&self) -> bool {
        use Opcode::*;
        matches!(
            self,
            Pong | StoreOk
                | FindNodeOk
                | FindValueOk
                | SubmitOk
                | StreamOk
                | AppendOk
                | FetchAllOk
                | PurgeOk
                | BeginAuthOk
                | CompleteAuthOk
                | GetParamsOk
                | PublishKeyOk
                | PublishParamsOk
                | FetchBundleOk
                | RegisterOk
                | OpenRoundOk
                | CloseRoundOk
                | Rotated
                | ReportOk
                | HeartbeatOk
                | TakeoverOk
                | HandoffOk
                | MetricsOk
                | Error
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: Opcode,
    pub request_id: u64,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION);
        w.u8(self.opcode as u8);
        w.u64(self.request_id);
        w.raw(&self.body);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::Version {
                offset: 0,
                got: version,
            });
        }
        let at = r.offset();
        let op = r.u8()?;
        let opcode = Opcode::from_u8(op).ok_or(WireError::malformed(at, "unknown opcode"))?;
        let request_id = r.u64()?;
        let body = r.raw(r.remaining())?.to_vec();
        Ok(Frame {
            opcode,
            request_id,
            body,
        })
    }
}

/// A typed frame body.
pub trait WireMsg: Sized {
    const OPCODE: Opcode;

    fn write(&self, w: &mut Writer);
    fn read(r: &mut Reader<'_>) -> Result<Self, WireError>;

    fn into_frame(self, request_id: u64) -> Frame {
        let mut w = Writer::new();
        self.write(&mut w);
        Frame {
            opcode: Self::OPCODE,
            request_id,
            body: w.finish(),
        }
    }

    fn from_frame(frame: &Frame) -> Result<Self, WireError> {
        if frame.opcode != Self::OPCODE {
            return Err(WireError::malformed(1, "opcode mismatch"));
        }
        let mut r = Reader::new(&frame.body);
        let msg = Self::read(&mut r)?;
        r.finish()?;
        Ok(msg)
    }
}

macro_rules! wire_msg {
    ($name:ident = $op:ident) => {
        impl WireMsg for $name {
            const OPCODE: Opcode = Opcode::$op;

            fn write(&self, w: &mut Writer) {
                self.write_body(w);
            }

            fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
                Self::read_body(r)
            }
        }
    };
}

fn read_node_id(r: &mut Reader<'_>) -> Result<NodeId, WireError> {
    Ok(NodeId(r.array::<{ ID_LEN }>()?))
}

fn read_dht_key(r: &mut Reader<'_>) -> Result<DhtKey, WireError> {
    Ok(DhtKey(r.array::<{ ID_LEN }>()?))
}

fn read_list<T>(
    r: &mut Reader<'_>,
    cap: usize,
    mut item: impl FnMut(&mut Reader<'_>) -> Result<T, WireError>,
) -> Result<Vec<T>, WireError> {
    let at = r.offset();
    let n = r.u32()? as usize;
    if n > cap {
        return Err(WireError::malformed(at, "list over cap"));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(item(r)?);
    }
    Ok(out)
}

// ---- overlay -------------------------------------------------------------

/// A reachable node: overlay id plus dial address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contact {
    pub id: NodeId,
    pub addr: NetAddr,
}

impl Contact {
    pub fn write_body(&self, w: &mut Writer) {
        w.raw(&self.id.0);
        self.addr.encode_into(w);
    }

    pub fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Contact {
            id: read_node_id(r)?,
            addr: NetAddr::decode_from(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ping {
    pub from: Contact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pong {
    pub from: Contact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Store {
    pub from: Contact,
    pub key: DhtKey,
    pub publisher: NodeId,
    pub data: Vec<u8>,
    pub ttl_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreOk {
    pub from: Contact,
    pub stored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindNode {
    pub from: Contact,
    pub target: DhtKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindNodeOk {
    pub from: Contact,
    pub closer: Vec<Contact>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindValue {
    pub from: Contact,
    pub key: DhtKey,
}

/// A value held under a key, tagged by who published it. Keys are
/// multi-valued: the barrier key accumulates one value per signaling mixer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StoredValue {
    pub publisher: NodeId,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindValueOk {
    pub from: Contact,
    pub values: Vec<StoredValue>,
    pub closer: Vec<Contact>,
}

impl Ping {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Ping {
            from: Contact::read_body(r)?,
        })
    }
}
wire_msg!(Ping = Ping);

impl Pong {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Pong {
            from: Contact::read_body(r)?,
        })
    }
}
wire_msg!(Pong = Pong);

impl Store {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
        w.raw(&self.key.0);
        w.raw(&self.publisher.0);
        w.bytes(&self.data);
        w.u64(self.ttl_ms);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Store {
            from: Contact::read_body(r)?,
            key: read_dht_key(r)?,
            publisher: read_node_id(r)?,
            data: r.bytes()?.to_vec(),
            ttl_ms: r.u64()?,
        })
    }
}
wire_msg!(Store = Store);

impl StoreOk {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
        w.u8(self.stored as u8);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(StoreOk {
            from: Contact::read_body(r)?,
            stored: r.u8()? != 0,
        })
    }
}
wire_msg!(StoreOk = StoreOk);

impl FindNode {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
        w.raw(&self.target.0);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FindNode {
            from: Contact::read_body(r)?,
            target: read_dht_key(r)?,
        })
    }
}
wire_msg!(FindNode = FindNode);

impl FindNodeOk {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
        w.u32(self.closer.len() as u32);
        for c in &self.closer {
            c.write_body(w);
        }
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FindNodeOk {
            from: Contact::read_body(r)?,
            closer: read_list(r, MAX_CONTACTS, Contact::read_body)?,
        })
    }
}
wire_msg!(FindNodeOk = FindNodeOk);

impl FindValue {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
        w.raw(&self.key.0);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FindValue {
            from: Contact::read_body(r)?,
            key: read_dht_key(r)?,
        })
    }
}
wire_msg!(FindValue = FindValue);

impl FindValueOk {
    fn write_body(&self, w: &mut Writer) {
        self.from.write_body(w);
        w.u32(self.values.len() as u32);
        for v in &self.values {
            w.raw(&v.publisher.0);
            w.bytes(&v.data);
        }
        w.u32(self.closer.len() as u32);
        for c in &self.closer {
            c.write_body(w);
        }
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FindValueOk {
            from: Contact::read_body(r)?,
            values: read_list(r, MAX_VALUES, |r| {
                Ok(StoredValue {
                    publisher: read_node_id(r)?,
                    data: r.bytes()?.to_vec(),
                })
            })?,
            closer: read_list(r, MAX_CONTACTS, Contact::read_body)?,
        })
    }
}
wire_msg!(FindValueOk = FindValueOk);

// ---- mixing ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submit {
    pub round: u64,
    pub packet: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmitOk {
    pub accepted: bool,
    /// The mixer's current round, so a client that raced a close can resync.
    pub round: u64,
}

/// Everything one mixer forwards to one destination in one wave, as a single
/// shuffled batch. Sent even when empty: arrival of the stream is what tells
/// the destination the wave is complete on that edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardStream {
    pub round: u64,
    pub wave: u8,
    pub from: NodeId,
    pub packets: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamOk {
    pub round: u64,
    pub wave: u8,
}

impl Submit {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
        w.bytes(&self.packet);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Submit {
            round: r.u64()?,
            packet: r.bytes()?.to_vec(),
        })
    }
}
wire_msg!(Submit = Submit);

impl SubmitOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.accepted as u8);
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(SubmitOk {
            accepted: r.u8()? != 0,
            round: r.u64()?,
        })
    }
}
wire_msg!(SubmitOk = SubmitOk);

impl ForwardStream {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
        w.u8(self.wave);
        w.raw(&self.from.0);
        w.u32(self.packets.len() as u32);
        for p in &self.packets {
            w.bytes(p);
        }
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(ForwardStream {
            round: r.u64()?,
            wave: r.u8()?,
            from: read_node_id(r)?,
            packets: read_list(r, MAX_STREAM_PACKETS, |r| Ok(r.bytes()?.to_vec()))?,
        })
    }
}
wire_msg!(ForwardStream = ForwardStream);

impl StreamOk {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
        w.u8(self.wave);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(StreamOk {
            round: r.u64()?,
            wave: r.u8()?,
        })
    }
}
wire_msg!(StreamOk = StreamOk);

// ---- mailboxes -------------------------------------------------------------

pub const MAILBOX_STATUS_OK: u8 = 0;
pub const MAILBOX_STATUS_WRONG_ROUND: u8 = 1;
pub const MAILBOX_STATUS_TOO_LARGE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Append {
    pub mailbox_id: [u8; 32],
    pub round: u64,
    pub blob: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendOk {
    pub status: u8,
    /// 1-based sequence within (mailbox, round); 0 on rejection.
    pub seq: u64,
    /// Server's current round.
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchAll {
    pub mailbox_id: [u8; 32],
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedRecord {
    pub seq: u64,
    pub blob: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchAllOk {
    pub status: u8,
    pub records: Vec<FetchedRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Purge {
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurgeOk {
    pub status: u8,
    pub removed: u64,
}

impl Append {
    fn write_body(&self, w: &mut Writer) {
        w.raw(&self.mailbox_id);
        w.u64(self.round);
        w.bytes(&self.blob);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Append {
            mailbox_id: r.array::<32>()?,
            round: r.u64()?,
            blob: r.bytes()?.to_vec(),
        })
    }
}
wire_msg!(Append = Append);

impl AppendOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.status);
        w.u64(self.seq);
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(AppendOk {
            status: r.u8()?,
            seq: r.u64()?,
            round: r.u64()?,
        })
    }
}
wire_msg!(AppendOk = AppendOk);

impl FetchAll {
    fn write_body(&self, w: &mut Writer) {
        w.raw(&self.mailbox_id);
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FetchAll {
            mailbox_id: r.array::<32>()?,
            round: r.u64()?,
        })
    }
}
wire_msg!(FetchAll = FetchAll);

impl FetchAllOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.status);
        w.u32(self.records.len() as u32);
        for rec in &self.records {
            w.u64(rec.seq);
            w.bytes(&rec.blob);
        }
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FetchAllOk {
            status: r.u8()?,
            records: read_list(r, MAX_FETCH_RECORDS, |r| {
                Ok(FetchedRecord {
                    seq: r.u64()?,
                    blob: r.bytes()?.to_vec(),
                })
            })?,
        })
    }
}
wire_msg!(FetchAllOk = FetchAllOk);

impl Purge {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Purge { round: r.u64()? })
    }
}
wire_msg!(Purge = Purge);

impl PurgeOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.status);
        w.u64(self.removed);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PurgeOk {
            status: r.u8()?,
            removed: r.u64()?,
        })
    }
}
wire_msg!(PurgeOk = PurgeOk);

// ---- key service -----------------------------------------------------------

pub const AUTH_STATUS_OK: u8 = 0;
pub const AUTH_STATUS_INVALID_IDENTITY: u8 = 1;
pub const AUTH_STATUS_RATE_LIMITED: u8 = 2;
pub const AUTH_STATUS_REJECTED: u8 = 3;
pub const AUTH_STATUS_NOT_READY: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeginAuth {
    pub identity: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeginAuthOk {
    pub status: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteAuth {
    pub identity: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteAuthOk {
    pub status: u8,
    /// Serialized identity private key; empty unless status is OK.
    pub key: Vec<u8>,
    /// Serialized [`ParamsBundle`]; empty unless status is OK.
    pub params: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetParams {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetParamsOk {
    /// Serialized [`ParamsBundle`]; empty before the first rotation.
    pub params: Vec<u8>,
}

impl BeginAuth {
    fn write_body(&self, w: &mut Writer) {
        w.str(&self.identity);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(BeginAuth {
            identity: r.str()?.to_string(),
        })
    }
}
wire_msg!(BeginAuth = BeginAuth);

impl BeginAuthOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.status);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(BeginAuthOk { status: r.u8()? })
    }
}
wire_msg!(BeginAuthOk = BeginAuthOk);

impl CompleteAuth {
    fn write_body(&self, w: &mut Writer) {
        w.str(&self.identity);
        w.str(&self.code);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(CompleteAuth {
            identity: r.str()?.to_string(),
            code: r.str()?.to_string(),
        })
    }
}
wire_msg!(CompleteAuth = CompleteAuth);

impl CompleteAuthOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.status);
        w.bytes(&self.key);
        w.bytes(&self.params);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(CompleteAuthOk {
            status: r.u8()?,
            key: r.bytes()?.to_vec(),
            params: r.bytes()?.to_vec(),
        })
    }
}
wire_msg!(CompleteAuthOk = CompleteAuthOk);

impl GetParams {
    fn write_body(&self, _w: &mut Writer) {}
    fn read_body(_r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(GetParams {})
    }
}
wire_msg!(GetParams = GetParams);

impl GetParamsOk {
    fn write_body(&self, w: &mut Writer) {
        w.bytes(&self.params);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(GetParamsOk {
            params: r.bytes()?.to_vec(),
        })
    }
}
wire_msg!(GetParamsOk = GetParamsOk);

/// Master public parameters for one round. What the key service publishes
/// and what clients pin their sends to. Never contains secret material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamsBundle {
    pub round: u64,
    pub mpk: Vec<u8>,
}

impl ParamsBundle {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.u64(self.round);
        w.bytes(&self.mpk);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let round = r.u64()?;
        let mpk = r.bytes()?.to_vec();
        r.finish()?;
        Ok(ParamsBundle { round, mpk })
    }
}

// ---- info nodes ------------------------------------------------------------

/// A mixer's onion key for one round, as published to the info nodes and the
/// overlay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixerKeyRecord {
    pub mixer_id: NodeId,
    pub round: u64,
    pub public_key: MixerPublicKey,
    pub address: NetAddr,
    pub published_at_ms: u64,
}

impl MixerKeyRecord {
    pub fn write_body(&self, w: &mut Writer) {
        w.raw(&self.mixer_id.0);
        w.u64(self.round);
        w.raw(&self.public_key.0);
        self.address.encode_into(w);
        w.u64(self.published_at_ms);
    }

    pub fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(MixerKeyRecord {
            mixer_id: read_node_id(r)?,
            round: r.u64()?,
            public_key: MixerPublicKey(r.array::<{ MIXER_PK_LEN }>()?),
            address: NetAddr::decode_from(r)?,
            published_at_ms: r.u64()?,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        self.write_body(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let rec = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishKey {
    pub record: MixerKeyRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishKeyOk {
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishParams {
    pub params: ParamsBundle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishParamsOk {}

pub const BUNDLE_STATUS_OK: u8 = 0;
pub const BUNDLE_STATUS_UNKNOWN_ROUND: u8 = 1;
pub const BUNDLE_STATUS_INCOMPLETE: u8 = 2;

/// Latest-round sentinel for [`FetchBundle::round`].
pub const ROUND_LATEST: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchBundle {
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchBundleOk {
    pub status: u8,
    /// Present exactly when status is OK.
    pub bundle: Option<KeyBundle>,
    /// Mixer ids the info node is still missing records for.
    pub missing: Vec<NodeId>,
}

impl PublishKey {
    fn write_body(&self, w: &mut Writer) {
        self.record.write_body(w);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PublishKey {
            record: MixerKeyRecord::read_body(r)?,
        })
    }
}
wire_msg!(PublishKey = PublishKey);

impl PublishKeyOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.accepted as u8);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PublishKeyOk {
            accepted: r.u8()? != 0,
        })
    }
}
wire_msg!(PublishKeyOk = PublishKeyOk);

impl PublishParams {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.params.round);
        w.bytes(&self.params.mpk);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PublishParams {
            params: ParamsBundle {
                round: r.u64()?,
                mpk: r.bytes()?.to_vec(),
            },
        })
    }
}
wire_msg!(PublishParams = PublishParams);

impl PublishParamsOk {
    fn write_body(&self, _w: &mut Writer) {}
    fn read_body(_r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PublishParamsOk {})
    }
}
wire_msg!(PublishParamsOk = PublishParamsOk);

impl FetchBundle {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(FetchBundle { round: r.u64()? })
    }
}
wire_msg!(FetchBundle = FetchBundle);

impl FetchBundleOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.status);
        match &self.bundle {
            Some(b) => {
                w.u8(1);
                w.bytes(&b.encode());
            }
            None => {
                w.u8(0);
            }
        }
        w.u32(self.missing.len() as u32);
        for id in &self.missing {
            w.raw(&id.0);
        }
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let status = r.u8()?;
        let bundle = match r.u8()? {
            0 => None,
            1 => Some(KeyBundle::decode(r.bytes()?)?),
            _ => return Err(WireError::malformed(r.offset() - 1, "bad option tag")),
        };
        let missing = read_list(r, MAX_CONTACTS, read_node_id)?;
        Ok(FetchBundleOk {
            status,
            bundle,
            missing,
        })
    }
}
wire_msg!(FetchBundleOk = FetchBundleOk);

// ---- round directory and key bundle ----------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Mixer = 1,
    InfoNode = 2,
    KeyService = 3,
    Mailbox = 4,
}

impl Role {
    pub fn from_u8(v: u8) -> Option<Role> {
        Some(match v {
            1 => Role::Mixer,
            2 => Role::InfoNode,
            3 => Role::KeyService,
            4 => Role::Mailbox,
            _ => return None,
        })
    }
}

/// Everything a participant needs to know about one round. Built and signed
/// by the coordinator at round open; the signature pins membership, so a
/// substituted or spoofed directory fails verification at every client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundDirectory {
    pub round: u64,
    pub coordinator: Contact,
    /// Strictly ascending by node id; canonical order is part of the
    /// signed bytes.
    pub mixers: Vec<Contact>,
    pub info_nodes: Vec<Contact>,
    pub key_service: Contact,
    pub mailbox: Contact,
    pub mailbox_count: u32,
    pub mailbox_salt: [u8; 32],
    pub open_time_ms: u64,
    pub round_duration_ms: u64,
    pub max_route_len: u8,
}

impl RoundDirectory {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.u64(self.round);
        self.coordinator.write_body(&mut w);
        w.u32(self.mixers.len() as u32);
        for m in &self.mixers {
            m.write_body(&mut w);
        }
        w.u32(self.info_nodes.len() as u32);
        for n in &self.info_nodes {
            n.write_body(&mut w);
        }
        self.key_service.write_body(&mut w);
        self.mailbox.write_body(&mut w);
        w.u32(self.mailbox_count);
        w.raw(&self.mailbox_salt);
        w.u64(self.open_time_ms);
        w.u64(self.round_duration_ms);
        w.u8(self.max_route_len);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let round = r.u64()?;
        let coordinator = Contact::read_body(&mut r)?;
        let at = r.offset();
        let mixers = read_list(&mut r, MAX_CONTACTS, Contact::read_body)?;
        if mixers.is_empty() {
            return Err(WireError::malformed(at, "directory without mixers"));
        }
        if mixers.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(WireError::malformed(at, "mixers not in canonical order"));
        }
        let info_nodes = read_list(&mut r, MAX_CONTACTS, Contact::read_body)?;
        let key_service = Contact::read_body(&mut r)?;
        let mailbox = Contact::read_body(&mut r)?;
        let at = r.offset();
        let mailbox_count = r.u32()?;
        if mailbox_count == 0 {
            return Err(WireError::malformed(at, "zero mailboxes"));
        }
        let mailbox_salt = r.array::<32>()?;
        let open_time_ms = r.u64()?;
        let round_duration_ms = r.u64()?;
        let at = r.offset();
        let max_route_len = r.u8()?;
        if max_route_len == 0 {
            return Err(WireError::malformed(at, "zero route length"));
        }
        r.finish()?;
        Ok(RoundDirectory {
            round,
            coordinator,
            mixers,
            info_nodes,
            key_service,
            mailbox,
            mailbox_count,
            mailbox_salt,
            open_time_ms,
            round_duration_ms,
            max_route_len,
        })
    }

    pub fn mixer_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.mixers.iter().map(|c| c.id)
    }

    /// Which mailbox column an identity maps to this round. Any sender can
    /// compute this from public directory data, which is what lets mail
    /// arrive without the recipient revealing a address.
    pub fn mailbox_index(&self, identity: &Identity) -> u32 {
        let mut data = Vec::with_capacity(40 + identity.as_bytes().len());
        data.extend_from_slice(&self.mailbox_salt);
        data.extend_from_slice(&self.round.to_le_bytes());
        data.extend_from_slice(identity.as_bytes());
        let d = hash::derive32(b"zephyr-mbx", &data);
        let x = u64::from_le_bytes(d[..8].try_into().unwrap());
        (x % self.mailbox_count as u64) as u32
    }

    /// Opaque 32-byte column id for an index. Derived, not enumerated, so a
    /// mailbox id on the wire does not reveal the column ordinal without the
    /// round salt.
    pub fn mailbox_id_of(&self, index: u32) -> [u8; 32] {
        let mut data = Vec::with_capacity(44);
        data.extend_from_slice(&self.mailbox_salt);
        data.extend_from_slice(&self.round.to_le_bytes());
        data.extend_from_slice(&index.to_le_bytes());
        hash::derive32(b"zephyr-mbxid", &data)
    }

    pub fn mailbox_address_for(&self, identity: &Identity) -> Address {
        Address::Mailbox {
            net: self.mailbox.addr.clone(),
            mailbox_id: self.mailbox_id_of(self.mailbox_index(identity)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedDirectory {
    pub directory: RoundDirectory,
    pub signature: Signature,
}

impl SignedDirectory {
    pub fn sign(directory: RoundDirectory, keypair: &Keypair) -> Self {
        let signature = keypair.sign(&directory.encode());
        SignedDirectory {
            directory,
            signature,
        }
    }

    pub fn verify(&self, coordinator: &VerifyingKey) -> bool {
        coordinator.verify(&self.directory.encode(), &self.signature)
    }

    pub fn write_body(&self, w: &mut Writer) {
        w.bytes(&self.directory.encode());
        w.raw(&self.signature.0);
    }

    pub fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let directory = RoundDirectory::decode(r.bytes()?)?;
        let signature = Signature(r.array::<{ SIGNATURE_LEN }>()?);
        Ok(SignedDirectory {
            directory,
            signature,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        self.write_body(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let sd = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(sd)
    }
}

/// The complete client-facing view of a round: signed directory, one onion
/// key record per directory mixer, and the master parameters. Serialization
/// is canonical (records ascending by mixer id), so two info nodes holding
/// the same round data produce byte-identical bundles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyBundle {
    pub round: u64,
    pub directory: SignedDirectory,
    pub records: Vec<MixerKeyRecord>,
    pub params: ParamsBundle,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("directory signature check failed")]
    BadSignature,
    #[error("round numbers disagree")]
    RoundMismatch,
    #[error("records do not cover the directory mixer set")]
    RecordSetMismatch,
}

impl KeyBundle {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.u64(self.round);
        self.directory.write_body(&mut w);
        w.u32(self.records.len() as u32);
        for rec in &self.records {
            rec.write_body(&mut w);
        }
        w.u64(self.params.round);
        w.bytes(&self.params.mpk);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::versioned(bytes)?;
        let round = r.u64()?;
        let directory = SignedDirectory::read_body(&mut r)?;
        let at = r.offset();
        let records = read_list(&mut r, MAX_CONTACTS, MixerKeyRecord::read_body)?;
        if records.windows(2).any(|w| w[0].mixer_id >= w[1].mixer_id) {
            return Err(WireError::malformed(at, "records not in canonical order"));
        }
        let params = ParamsBundle {
            round: r.u64()?,
            mpk: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(KeyBundle {
            round,
            directory,
            records,
            params,
        })
    }

    /// Full trust check a client runs before using a bundle.
    pub fn validate(&self, coordinator: &VerifyingKey) -> Result<(), BundleError> {
        if !self.directory.verify(coordinator) {
            return Err(BundleError::BadSignature);
        }
        let dir = &self.directory.directory;
        if self.round != dir.round
            || self.params.round != dir.round
            || self.records.iter().any(|r| r.round != dir.round)
        {
            return Err(BundleError::RoundMismatch);
        }
        let dir_ids: Vec<NodeId> = dir.mixer_ids().collect();
        let rec_ids: Vec<NodeId> = self.records.iter().map(|r| r.mixer_id).collect();
        if dir_ids != rec_ids {
            return Err(BundleError::RecordSetMismatch);
        }
        Ok(())
    }

    pub fn digest(&self) -> [u8; 32] {
        hash::derive32(b"zephyr-bundle", &self.encode())
    }
}

// ---- round coordination ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub role: Role,
    pub contact: Contact,
    pub public_key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterOk {
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenRound {
    pub directory: SignedDirectory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenRoundOk {
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloseRound {
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloseRoundOk {
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerRotation {
    pub next_round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotated {
    pub next_round: u64,
    pub node: NodeId,
}

/// Per-round accounting a mixer files after its last wave. For a completed
/// round, received == forwarded + uploaded + dropped; duplicates counts
/// packets rejected before entering the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundReport {
    pub mixer: NodeId,
    pub round: u64,
    pub received: u64,
    pub forwarded: u64,
    pub uploaded: u64,
    pub dropped: u64,
    pub duplicates: u64,
    pub aborted: bool,
}

impl RoundReport {
    pub fn conserved(&self) -> bool {
        self.received == self.forwarded + self.uploaded + self.dropped
    }

    pub fn write_body(&self, w: &mut Writer) {
        w.raw(&self.mixer.0);
        w.u64(self.round);
        w.u64(self.received);
        w.u64(self.forwarded);
        w.u64(self.uploaded);
        w.u64(self.dropped);
        w.u64(self.duplicates);
        w.u8(self.aborted as u8);
    }

    pub fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(RoundReport {
            mixer: read_node_id(r)?,
            round: r.u64()?,
            received: r.u64()?,
            forwarded: r.u64()?,
            uploaded: r.u64()?,
            dropped: r.u64()?,
            duplicates: r.u64()?,
            aborted: r.u8()? != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportDone {
    pub report: RoundReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportOk {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heartbeat {
    pub from: NodeId,
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeartbeatOk {
    pub round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Takeover {
    pub round: u64,
    pub acting: Contact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TakeoverOk {
    pub round: u64,
}

/// Handed from a substitute coordinator back to the recovered original:
/// everything the original needs to open the next round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handoff {
    pub completed_round: u64,
    pub reports: Vec<RoundReport>,
    /// Mixers that confirmed key rotation for the next round.
    pub rotated: Vec<NodeId>,
    pub key_service_rotated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandoffOk {
    pub accepted: bool,
}

impl Register {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.role as u8);
        self.contact.write_body(w);
        w.bytes(&self.public_key);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let at = r.offset();
        let role = Role::from_u8(r.u8()?).ok_or(WireError::malformed(at, "unknown role"))?;
        Ok(Register {
            role,
            contact: Contact::read_body(r)?,
            public_key: r.bytes()?.to_vec(),
        })
    }
}
wire_msg!(Register = Register);

impl RegisterOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.accepted as u8);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(RegisterOk {
            accepted: r.u8()? != 0,
        })
    }
}
wire_msg!(RegisterOk = RegisterOk);

impl OpenRound {
    fn write_body(&self, w: &mut Writer) {
        self.directory.write_body(w);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(OpenRound {
            directory: SignedDirectory::read_body(r)?,
        })
    }
}
wire_msg!(OpenRound = OpenRound);

impl OpenRoundOk {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(OpenRoundOk { round: r.u64()? })
    }
}
wire_msg!(OpenRoundOk = OpenRoundOk);

impl CloseRound {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(CloseRound { round: r.u64()? })
    }
}
wire_msg!(CloseRound = CloseRound);

impl CloseRoundOk {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(CloseRoundOk { round: r.u64()? })
    }
}
wire_msg!(CloseRoundOk = CloseRoundOk);

impl TriggerRotation {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.next_round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(TriggerRotation {
            next_round: r.u64()?,
        })
    }
}
wire_msg!(TriggerRotation = TriggerRotation);

impl Rotated {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.next_round);
        w.raw(&self.node.0);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Rotated {
            next_round: r.u64()?,
            node: read_node_id(r)?,
        })
    }
}
wire_msg!(Rotated = Rotated);

impl ReportDone {
    fn write_body(&self, w: &mut Writer) {
        self.report.write_body(w);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(ReportDone {
            report: RoundReport::read_body(r)?,
        })
    }
}
wire_msg!(ReportDone = ReportDone);

impl ReportOk {
    fn write_body(&self, _w: &mut Writer) {}
    fn read_body(_r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(ReportOk {})
    }
}
wire_msg!(ReportOk = ReportOk);

impl Heartbeat {
    fn write_body(&self, w: &mut Writer) {
        w.raw(&self.from.0);
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Heartbeat {
            from: read_node_id(r)?,
            round: r.u64()?,
        })
    }
}
wire_msg!(Heartbeat = Heartbeat);

impl HeartbeatOk {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(HeartbeatOk { round: r.u64()? })
    }
}
wire_msg!(HeartbeatOk = HeartbeatOk);

impl Takeover {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
        self.acting.write_body(w);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Takeover {
            round: r.u64()?,
            acting: Contact::read_body(r)?,
        })
    }
}
wire_msg!(Takeover = Takeover);

impl TakeoverOk {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.round);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(TakeoverOk { round: r.u64()? })
    }
}
wire_msg!(TakeoverOk = TakeoverOk);

impl Handoff {
    fn write_body(&self, w: &mut Writer) {
        w.u64(self.completed_round);
        w.u32(self.reports.len() as u32);
        for rep in &self.reports {
            rep.write_body(w);
        }
        w.u32(self.rotated.len() as u32);
        for id in &self.rotated {
            w.raw(&id.0);
        }
        w.u8(self.key_service_rotated as u8);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Handoff {
            completed_round: r.u64()?,
            reports: read_list(r, MAX_CONTACTS, RoundReport::read_body)?,
            rotated: read_list(r, MAX_CONTACTS, read_node_id)?,
            key_service_rotated: r.u8()? != 0,
        })
    }
}
wire_msg!(Handoff = Handoff);

impl HandoffOk {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.accepted as u8);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(HandoffOk {
            accepted: r.u8()? != 0,
        })
    }
}
wire_msg!(HandoffOk = HandoffOk);

// ---- diagnostics -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetMetrics {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsOk {
    pub text: String,
}

pub const ERR_MALFORMED: u8 = 1;
pub const ERR_UNSUPPORTED: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMsg {
    pub code: u8,
    pub detail: String,
}

impl GetMetrics {
    fn write_body(&self, _w: &mut Writer) {}
    fn read_body(_r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(GetMetrics {})
    }
}
wire_msg!(GetMetrics = GetMetrics);

impl MetricsOk {
    fn write_body(&self, w: &mut Writer) {
        w.str(&self.text);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(MetricsOk {
            text: r.str()?.to_string(),
        })
    }
}
wire_msg!(MetricsOk = MetricsOk);

impl ErrorMsg {
    fn write_body(&self, w: &mut Writer) {
        w.u8(self.code);
        w.str(&self.detail);
    }
    fn read_body(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(ErrorMsg {
            code: r.u8()?,
            detail: r.str()?.to_string(),
        })
    }
}
wire_msg!(ErrorMsg = Error);
