//! Kademlia-style overlay: XOR-metric routing table, multi-value store, and
//! iterative lookups, packaged as a sans-IO endpoint other node logic embeds.
//!
//! The endpoint owns request ids at or above [`DHT_REQ_BASE`] and reuses each
//! request id as the timeout timer token, so owners keep their own ids and
//! tokens below that line. `handle_frame`/`handle_timer` return false for
//! anything that is not the endpoint's business, letting the owner try next.
//!
//! Departures from textbook Kademlia, all deliberate:
//! - keys are multi-valued: a key holds a set of (publisher, value) pairs
//!   with per-pair expiry, because the readiness barrier counts one value
//!   per signaling mixer under a single well-known key;
//! - a full bucket drops the newcomer instead of probing the oldest entry
//!   (no replacement cache, no bucket refresh);
//! - an RPC timeout evicts the contact from the table immediately.

use std::collections::{BTreeMap, HashMap};

use zephyr_core::ids::{DhtKey, Distance, NodeId};
use zephyr_core::proto::{
    Contact, FindNode, FindNodeOk, FindValue, FindValueOk, Frame, Opcode, Ping, Pong, Store,
    StoreOk, StoredValue, WireMsg, MAX_CONTACTS, MAX_DHT_VALUE,
};

use crate::runtime::{Context, Peer, RequestIds, TimerToken};

pub const K: usize = 8;
pub const ALPHA: usize = 3;
pub const RPC_TIMEOUT_MS: u64 = 500;
/// Server-side ceiling on requested TTLs; a publisher asking for more gets
/// clamped, it does not get an error.
pub const MAX_TTL_MS: u64 = 60 * 60 * 1000;
/// First request id the endpoint allocates. Doubles as the floor of its
/// timer-token range.
pub const DHT_REQ_BASE: u64 = 1 << 32;

const BUCKETS: usize = 160;

// ---- routing table ---------------------------------------------------------

/// k-buckets over the XOR metric. Bucket i holds contacts whose distance to
/// self has its highest set bit at position i; within a bucket, order is
/// least-recently-seen first.
pub struct RoutingTable {
    self_id: NodeId,
    k: usize,
    buckets: Vec<Vec<Contact>>,
}

impl RoutingTable {
    pub fn new(self_id: NodeId) -> Self {
        RoutingTable {
            self_id,
            k: K,
            buckets: vec![Vec::new(); BUCKETS],
        }
    }

    pub fn self_id(&self) -> NodeId {
        self.self_id
    }

    fn bucket_of(&self, id: &NodeId) -> Option<usize> {
        self.self_id.distance_to(&id.as_key()).bucket()
    }

    /// Records a live sighting. Known contacts move to the tail (most
    /// recently seen); new ones append unless the bucket is full, in which
    /// case the newcomer is dropped.
    pub fn touch(&mut self, contact: Contact) {
        let Some(i) = self.bucket_of(&contact.id) else {
            return; // our own id never goes in the table
        };
        let bucket = &mut self.buckets[i];
        if let Some(pos) = bucket.iter().position(|c| c.id == contact.id) {
            bucket.remove(pos);
            bucket.push(contact);
        } else if bucket.len() < self.k {
            bucket.push(contact);
        }
    }

    pub fn remove(&mut self, id: &NodeId) {
        if let Some(i) = self.bucket_of(id) {
            self.buckets[i].retain(|c| c.id != *id);
        }
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.bucket_of(id)
            .is_some_and(|i| self.buckets[i].iter().any(|c| c.id == *id))
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `n` contacts closest to `target`, nearest first.
    pub fn closest(&self, target: &DhtKey, n: usize) -> Vec<Contact> {
        let mut all: Vec<(Distance, Contact)> = self
            .buckets
            .iter()
            .flatten()
            .map(|c| (c.id.distance_to(target), c.clone()))
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.truncate(n);
        all.into_iter().map(|(_, c)| c).collect()
    }

    #[cfg(test)]
    fn bucket_index_holding(&self, id: &NodeId) -> Option<usize> {
        (0..BUCKETS).find(|&i| self.buckets[i].iter().any(|c| c.id == *id))
    }
}

// ---- local store -----------------------------------------------------------

struct Held {
    publisher: NodeId,
    data: Vec<u8>,
    expires_at: u64,
}

/// Multi-value store: each key maps to a set of (publisher, value) pairs.
/// Re-storing an existing pair refreshes its expiry; distinct pairs coexist.
#[derive(Default)]
pub struct StoreMap {
    held: BTreeMap<DhtKey, Vec<Held>>,
}

impl StoreMap {
    pub fn new() -> Self {
        StoreMap::default()
    }

    /// Returns false only for values over the wire cap.
    pub fn put(&mut self, key: DhtKey, publisher: NodeId, data: Vec<u8>, now: u64, ttl_ms: u64) -> bool {
        if data.len() > MAX_DHT_VALUE {
            return false;
        }
        let expires_at = now.saturating_add(ttl_ms.min(MAX_TTL_MS));
        let slot = self.held.entry(key).or_default();
        if let Some(existing) = slot
            .iter_mut()
            .find(|h| h.publisher == publisher && h.data == data)
        {
            existing.expires_at = existing.expires_at.max(expires_at);
        } else {
            slot.push(Held {
                publisher,
                data,
                expires_at,
            });
        }
        true
    }

    /// Live values under `key`, pruning expired ones on the way.
    pub fn get(&mut self, key: &DhtKey, now: u64) -> Vec<StoredValue> {
        let Some(slot) = self.held.get_mut(key) else {
            return Vec::new();
        };
        slot.retain(|h| h.expires_at > now);
        let out = slot
            .iter()
            .map(|h| StoredValue {
                publisher: h.publisher,
                data: h.data.clone(),
            })
            .collect();
        if slot.is_empty() {
            self.held.remove(key);
        }
        out
    }

    pub fn prune(&mut self, now: u64) {
        self.held.retain(|_, slot| {
            slot.retain(|h| h.expires_at > now);
            !slot.is_empty()
        });
    }

    pub fn footprint(&self) -> u64 {
        self.held
            .values()
            .flatten()
            .map(|h| (h.data.len() + 48) as u64)
            .sum()
    }
}

// ---- iterative lookup ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupMode {
    Node,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupOutcome {
    /// Node mode: the k closest contacts that answered, nearest first.
    /// Includes self when self is among them.
    Nodes(Vec<Contact>),
    /// Value mode: union of values seen. Empty means the key exists nowhere
    /// reachable, which for a barrier key is simply "count zero".
    Values(Vec<StoredValue>),
    /// A put finished; the value now sits on `replicas` nodes (self counts).
    Stored { replicas: usize },
    /// No contacted node responded at all.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupResult {
    pub handle: u64,
    pub target: DhtKey,
    pub outcome: LookupOutcome,
}

enum Purpose {
    Caller,
    /// Node lookup that continues into Store RPCs at the k closest.
    Put {
        publisher: NodeId,
        data: Vec<u8>,
        ttl_ms: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CandState {
    Unqueried,
    Pending,
    Responded,
    Failed,
}

struct Candidate {
    dist: Distance,
    contact: Contact,
    state: CandState,
}

struct Lookup {
    target: DhtKey,
    mode: LookupMode,
    purpose: Purpose,
    /// Sorted by distance to target, nearest first.
    candidates: Vec<Candidate>,
    values: Vec<StoredValue>,
    pending: usize,
    remote_responses: usize,
    queried_any: bool,
}

impl Lookup {
    fn merge(&mut self, contact: Contact, target: &DhtKey) {
        if self.candidates.iter().any(|c| c.contact.id == contact.id) {
            return;
        }
        let dist = contact.id.distance_to(target);
        let at = self
            .candidates
            .partition_point(|c| c.dist < dist);
        self.candidates.insert(
            at,
            Candidate {
                dist,
                contact,
                state: CandState::Unqueried,
            },
        );
    }

    fn mark(&mut self, id: &NodeId, state: CandState) {
        if let Some(c) = self.candidates.iter_mut().find(|c| c.contact.id == *id) {
            if c.state == CandState::Pending {
                self.pending -= 1;
            }
            c.state = state;
        }
    }

    /// Index of the next candidate worth querying: the nearest unqueried one
    /// among the k best non-failed candidates.
    fn next_unqueried(&self) -> Option<usize> {
        self.candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.state != CandState::Failed)
            .take(K)
            .find(|(_, c)| c.state == CandState::Unqueried)
            .map(|(i, _)| i)
    }

    fn best_responded(&self) -> Vec<Contact> {
        self.candidates
            .iter()
            .filter(|c| c.state == CandState::Responded)
            .take(K)
            .map(|c| c.contact.clone())
            .collect()
    }
}

// ---- endpoint ---------------------------------------------------------------

enum RpcRef {
    Lookup { lookup: u64, contact: NodeId },
    Store { contact: NodeId },
}

/// The embeddable DHT node. Owners forward overlay frames and timers here
/// and poll [`take_completed`](DhtEndpoint::take_completed) for finished
/// lookups.
pub struct DhtEndpoint {
    self_contact: Contact,
    pub table: RoutingTable,
    pub store: StoreMap,
    ids: RequestIds,
    next_handle: u64,
    lookups: HashMap<u64, Lookup>,
    rpcs: HashMap<u64, RpcRef>,
    completed: Vec<LookupResult>,
}

impl DhtEndpoint {
    pub fn new(self_contact: Contact, seeds: &[Contact]) -> Self {
        let mut table = RoutingTable::new(self_contact.id);
        for seed in seeds {
            if seed.id != self_contact.id {
                table.touch(seed.clone());
            }
        }
        DhtEndpoint {
            table,
            store: StoreMap::new(),
            self_contact,
            ids: RequestIds::starting_at(DHT_REQ_BASE),
            next_handle: 0,
            lookups: HashMap::new(),
            rpcs: HashMap::new(),
            completed: Vec::new(),
        }
    }

    pub fn self_id(&self) -> NodeId {
        self.self_contact.id
    }

    /// Join: iterative lookup of our own id, which both announces us to the
    /// seeds and fills nearby buckets. Harmless on an empty seed list.
    pub fn bootstrap(&mut self, ctx: &mut dyn Context) -> u64 {
        self.start_lookup(
            self.self_contact.id.as_key(),
            LookupMode::Node,
            Purpose::Caller,
            ctx,
        )
    }

    pub fn lookup_nodes(&mut self, target: DhtKey, ctx: &mut dyn Context) -> u64 {
        self.start_lookup(target, LookupMode::Node, Purpose::Caller, ctx)
    }

    pub fn lookup_value(&mut self, key: DhtKey, ctx: &mut dyn Context) -> u64 {
        self.start_lookup(key, LookupMode::Value, Purpose::Caller, ctx)
    }

    /// Stores (self, data) under `key` on the k closest nodes, self included
    /// when applicable. Resolves to [`LookupOutcome::Stored`]. The local
    /// replica lands immediately, before the placement lookup settles, so
    /// the publisher can serve the value throughout.
    pub fn put(&mut self, key: DhtKey, data: Vec<u8>, ttl_ms: u64, ctx: &mut dyn Context) -> u64 {
        let publisher = self.self_contact.id;
        self.store
            .put(key, publisher, data.clone(), ctx.now(), ttl_ms);
        self.start_lookup(
            key,
            LookupMode::Node,
            Purpose::Put {
                publisher,
                data,
                ttl_ms,
            },
            ctx,
        )
    }

    /// One barrier vote: our id stored under the round's well-known key.
    pub fn barrier_signal(&mut self, round: u64, ttl_ms: u64, ctx: &mut dyn Context) -> u64 {
        let data = self.self_contact.id.0.to_vec();
        self.put(DhtKey::barrier(round), data, ttl_ms, ctx)
    }

    /// Resolves to Values(..); the caller counts them. Deduplication is the
    /// store's job, so len() is the number of distinct signalers.
    pub fn barrier_count(&mut self, round: u64, ctx: &mut dyn Context) -> u64 {
        self.lookup_value(DhtKey::barrier(round), ctx)
    }

    pub fn take_completed(&mut self) -> Vec<LookupResult> {
        std::mem::take(&mut self.completed)
    }

    pub fn footprint(&self) -> u64 {
        self.store.footprint() + (self.table.len() as u64) * 96
    }

    fn start_lookup(
        &mut self,
        target: DhtKey,
        mode: LookupMode,
        purpose: Purpose,
        ctx: &mut dyn Context,
    ) -> u64 {
        self.next_handle += 1;
        let handle = self.next_handle;
        let mut lookup = Lookup {
            target,
            mode,
            purpose,
            candidates: Vec::new(),
            values: Vec::new(),
            pending: 0,
            remote_responses: 0,
            queried_any: false,
        };
        // Self participates as an already-answered candidate: it puts us in
        // our own node-mode results and seeds value-mode with local data.
        let self_id = self.self_contact.id;
        lookup.merge(self.self_contact.clone(), &target);
        lookup.mark(&self_id, CandState::Responded);
        if mode == LookupMode::Value {
            lookup.values = self.store.get(&target, ctx.now());
        }
        for c in self.table.closest(&target, K) {
            lookup.merge(c, &target);
        }
        self.lookups.insert(handle, lookup);
        self.advance(handle, ctx);
        handle
    }

    /// Issues queries up to the α window, or finishes the lookup.
    fn advance(&mut self, handle: u64, ctx: &mut dyn Context) {
        loop {
            let Some(lookup) = self.lookups.get_mut(&handle) else {
                return;
            };
            if lookup.pending >= ALPHA {
                return;
            }
            let Some(i) = lookup.next_unqueried() else {
                if lookup.pending == 0 {
                    self.finish(handle, ctx);
                }
                return;
            };
            lookup.candidates[i].state = CandState::Pending;
            lookup.pending += 1;
            lookup.queried_any = true;
            let to = lookup.candidates[i].contact.clone();
            let target = lookup.target;
            let mode = lookup.mode;
            let request_id = self.ids.allocate();
            self.rpcs.insert(
                request_id,
                RpcRef::Lookup {
                    lookup: handle,
                    contact: to.id,
                },
            );
            let from = self.self_contact.clone();
            let frame = match mode {
                LookupMode::Node => FindNode { from, target }.into_frame(request_id),
                LookupMode::Value => FindValue { from, key: target }.into_frame(request_id),
            };
            ctx.send(&to.addr, frame);
            ctx.set_timer(RPC_TIMEOUT_MS, request_id);
        }
    }

    fn finish(&mut self, handle: u64, ctx: &mut dyn Context) {
        let Some(lookup) = self.lookups.remove(&handle) else {
            return;
        };
        let best = lookup.best_responded();
        let target = lookup.target;
        // "Nobody answered" only counts as failure if there was anyone to
        // ask; a single-node network resolves from local state.
        let failed =
            lookup.queried_any && lookup.remote_responses == 0 && lookup.values.is_empty();
        let outcome = match lookup.purpose {
            // A put never fails outright: self always holds a replica, so a
            // vote survives a partition and re-replicates on the next put.
            Purpose::Put {
                publisher,
                data,
                ttl_ms,
            } => {
                for c in &best {
                    if c.id == self.self_contact.id {
                        self.store
                            .put(target, publisher, data.clone(), ctx.now(), ttl_ms);
                    } else {
                        let request_id = self.ids.allocate();
                        self.rpcs
                            .insert(request_id, RpcRef::Store { contact: c.id });
                        ctx.send(
                            &c.addr,
                            Store {
                                from: self.self_contact.clone(),
                                key: target,
                                publisher,
                                data: data.clone(),
                                ttl_ms,
                            }
                            .into_frame(request_id),
                        );
                        ctx.set_timer(RPC_TIMEOUT_MS, request_id);
                    }
                }
                LookupOutcome::Stored {
                    replicas: best.len(),
                }
            }
            Purpose::Caller if failed => LookupOutcome::Failed,
            Purpose::Caller => match lookup.mode {
                LookupMode::Node => LookupOutcome::Nodes(best),
                LookupMode::Value => {
                    let mut vals = lookup.values;
                    vals.sort();
                    vals.dedup();
                    LookupOutcome::Values(vals)
                }
            },
        };
        self.completed.push(LookupResult {
            handle,
            target,
            outcome,
        });
    }

    /// Consumes overlay frames. Returns false when the frame is not overlay
    /// traffic or is a response to a request id we never issued.
    pub fn handle_frame(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) -> bool {
        match frame.opcode {
            Opcode::Ping => {
                if let Ok(msg) = Ping::from_frame(frame) {
                    self.table.touch(msg.from);
                    ctx.reply(
                        from,
                        Pong {
                            from: self.self_contact.clone(),
                        }
                        .into_frame(frame.request_id),
                    );
                }
                true
            }
            Opcode::Store => {
                if let Ok(msg) = Store::from_frame(frame) {
                    self.table.touch(msg.from.clone());
                    let stored =
                        self.store
                            .put(msg.key, msg.publisher, msg.data, ctx.now(), msg.ttl_ms);
                    ctx.reply(
                        from,
                        StoreOk {
                            from: self.self_contact.clone(),
                            stored,
                        }
                        .into_frame(frame.request_id),
                    );
                }
                true
            }
            Opcode::FindNode => {
                if let Ok(msg) = FindNode::from_frame(frame) {
                    self.table.touch(msg.from.clone());
                    let mut closer = self.table.closest(&msg.target, K);
                    closer.retain(|c| c.id != msg.from.id);
                    closer.truncate(MAX_CONTACTS);
                    ctx.reply(
                        from,
                        FindNodeOk {
                            from: self.self_contact.clone(),
                            closer,
                        }
                        .into_frame(frame.request_id),
                    );
                }
                true
            }
            Opcode::FindValue => {
                if let Ok(msg) = FindValue::from_frame(frame) {
                    self.table.touch(msg.from.clone());
                    let values = self.store.get(&msg.key, ctx.now());
                    let mut closer = self.table.closest(&msg.key, K);
                    closer.retain(|c| c.id != msg.from.id);
                    ctx.reply(
                        from,
                        FindValueOk {
                            from: self.self_contact.clone(),
                            values,
                            closer,
                        }
                        .into_frame(frame.request_id),
                    );
                }
                true
            }
            Opcode::Pong => {
                // Standalone pings are issued by owners (election sweeps),
                // so only consume pongs for ids we know; there are none
                // today, but the symmetry is cheap.
                if self.rpcs.contains_key(&frame.request_id) {
                    self.rpcs.remove(&frame.request_id);
                    if let Ok(msg) = Pong::from_frame(frame) {
                        self.table.touch(msg.from);
                    }
                    true
                } else {
                    false
                }
            }
            Opcode::StoreOk => {
                let Some(RpcRef::Store { .. }) = self.rpcs.get(&frame.request_id) else {
                    return false;
                };
                self.rpcs.remove(&frame.request_id);
                if let Ok(msg) = StoreOk::from_frame(frame) {
                    self.table.touch(msg.from);
                }
                true
            }
            Opcode::FindNodeOk | Opcode::FindValueOk => {
                let Some(RpcRef::Lookup { lookup, contact }) =
                    self.rpcs.remove(&frame.request_id)
                else {
                    return false;
                };
                self.on_lookup_response(lookup, contact, frame, ctx);
                true
            }
            _ => false,
        }
    }

    fn on_lookup_response(
        &mut self,
        handle: u64,
        contact: NodeId,
        frame: &Frame,
        ctx: &mut dyn Context,
    ) {
        if !self.lookups.contains_key(&handle) {
            // Lookup already finished (value short-circuit): still learn the
            // responder's liveness.
            let from = match frame.opcode {
                Opcode::FindNodeOk => FindNodeOk::from_frame(frame).ok().map(|m| m.from),
                Opcode::FindValueOk => FindValueOk::from_frame(frame).ok().map(|m| m.from),
                _ => None,
            };
            if let Some(c) = from {
                self.table.touch(c);
            }
            return;
        }
        let mut short_circuit = false;
        {
            let lookup = self.lookups.get_mut(&handle).expect("checked above");
            let target = lookup.target;
            lookup.mark(&contact, CandState::Responded);
            lookup.remote_responses += 1;
            match frame.opcode {
                Opcode::FindNodeOk => {
                    if let Ok(msg) = FindNodeOk::from_frame(frame) {
                        self.table.touch(msg.from);
                        let lookup = self.lookups.get_mut(&handle).expect("checked above");
                        for c in msg.closer {
                            if c.id != self.self_contact.id {
                                lookup.merge(c, &target);
                            }
                        }
                    }
                }
                Opcode::FindValueOk => {
                    if let Ok(msg) = FindValueOk::from_frame(frame) {
                        self.table.touch(msg.from);
                        let lookup = self.lookups.get_mut(&handle).expect("checked above");
                        if !msg.values.is_empty() {
                            lookup.values.extend(msg.values);
                            // Any holder has the full set by the replication
                            // contract, so stop expanding the frontier.
                            short_circuit = true;
                        }
                        for c in msg.closer {
                            if c.id != self.self_contact.id {
                                lookup.merge(c, &target);
                            }
                        }
                    }
                }
                _ => unreachable!("routed by opcode"),
            }
        }
        if short_circuit {
            self.finish(handle, ctx);
        } else {
            self.advance(handle, ctx);
        }
    }

    /// Consumes RPC-timeout timers. Any token at or above [`DHT_REQ_BASE`]
    /// belongs to the endpoint; stale ones (response already arrived) are
    /// swallowed.
    pub fn handle_timer(&mut self, token: TimerToken, ctx: &mut dyn Context) -> bool {
        if token < DHT_REQ_BASE {
            return false;
        }
        match self.rpcs.remove(&token) {
            Some(RpcRef::Lookup { lookup, contact }) => {
                // Unresponsive node: evict so later lookups skip it too.
                self.table.remove(&contact);
                if let Some(l) = self.lookups.get_mut(&lookup) {
                    l.mark(&contact, CandState::Failed);
                }
                self.advance(lookup, ctx);
            }
            Some(RpcRef::Store { contact }) => {
                self.table.remove(&contact);
            }
            None => {}
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use zephyr_core::envelope::NetAddr;

    fn nid(tag: u8) -> NodeId {
        NodeId([tag; 20])
    }

    fn contact(tag: u8) -> Contact {
        Contact {
            id: nid(tag),
            addr: NetAddr::new(&format!("n{tag}"), 7000 + tag as u16).unwrap(),
        }
    }

    #[test]
    fn touch_orders_buckets_lru() {
        let mut t = RoutingTable::new(nid(0));
        // 0x80 ^ 0 has bit 7 of byte 0 set → bucket 159 for all of these
        let a = Contact {
            id: NodeId([0x80; 20]),
            addr: NetAddr::new("a", 1).unwrap(),
        };
        let b = Contact {
            id: NodeId([0x81; 20]),
            addr: NetAddr::new("b", 2).unwrap(),
        };
        t.touch(a.clone());
        t.touch(b.clone());
        assert_eq!(t.buckets[159], vec![a.clone(), b.clone()]);
        t.touch(a.clone()); // re-seen: moves to most-recent slot
        assert_eq!(t.buckets[159], vec![b, a]);
    }

    #[test]
    fn full_bucket_drops_newcomer() {
        let mut t = RoutingTable::new(nid(0));
        let mut residents = Vec::new();
        for i in 0..K as u8 {
            let c = Contact {
                id: NodeId({
                    let mut b = [0u8; 20];
                    b[0] = 0x80;
                    b[19] = i;
                    b
                }),
                addr: NetAddr::new("r", 100 + i as u16).unwrap(),
            };
            residents.push(c.clone());
            t.touch(c);
        }
        let newcomer = Contact {
            id: NodeId({
                let mut b = [0u8; 20];
                b[0] = 0x80;
                b[19] = 0xff;
                b
            }),
            addr: NetAddr::new("x", 999).unwrap(),
        };
        t.touch(newcomer.clone());
        assert_eq!(t.buckets[159].len(), K);
        assert!(!t.contains(&newcomer.id));
        // existing residents untouched
        for r in &residents {
            assert!(t.contains(&r.id));
        }
    }

    #[test]
    fn self_id_never_enters_table() {
        let mut t = RoutingTable::new(nid(7));
        t.touch(contact(7));
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn contacts_land_in_distance_matched_bucket() {
        // Invariant: a contact's bucket index equals the highest set bit of
        // its XOR distance from self.
        let me = nid(0x55);
        let mut t = RoutingTable::new(me);
        for tag in [0x00u8, 0x01, 0x54, 0x56, 0x7f, 0x80, 0xaa, 0xff] {
            let c = contact(tag);
            let want = me.distance_to(&c.id.as_key()).bucket();
            t.touch(c.clone());
            assert_eq!(t.bucket_index_holding(&c.id), want, "tag {tag:#x}");
        }
    }

    #[test]
    fn closest_sorts_by_xor_distance() {
        let mut t = RoutingTable::new(nid(0));
        for tag in [0x01u8, 0x02, 0x04, 0x08, 0x10, 0x20] {
            t.touch(contact(tag));
        }
        let near = t.closest(&nid(0x03).as_key(), 3);
        // distances from 0x03..: 0x02→0x01.., 0x01→0x02.., 0x04 (wait, repeated
        // bytes) — target 0x03 repeated; d(0x02)=0x01 rep, d(0x01)=0x02 rep,
        // d(0x04)=0x07 rep: order 0x02, 0x01, 0x04.
        let ids: Vec<u8> = near.iter().map(|c| c.id.0[0]).collect();
        assert_eq!(ids, vec![0x02, 0x01, 0x04]);
    }

    #[test]
    fn store_map_multi_value_dedupe_and_ttl() {
        let mut s = StoreMap::new();
        let key = DhtKey::barrier(3);
        assert!(s.put(key, nid(1), b"a".to_vec(), 0, 1000));
        assert!(s.put(key, nid(2), b"b".to_vec(), 0, 1000));
        // same (publisher, value) pair: refresh, not a new member
        assert!(s.put(key, nid(1), b"a".to_vec(), 500, 1000));
        assert_eq!(s.get(&key, 600).len(), 2);
        // distinct value from a known publisher is a new member
        assert!(s.put(key, nid(1), b"c".to_vec(), 600, 1000));
        assert_eq!(s.get(&key, 600).len(), 3);
        // nid(2)'s entry expires at 1000; nid(1)'s refresh pushed it to 1500
        assert_eq!(s.get(&key, 1100).len(), 2);
        assert_eq!(s.get(&key, 5000).len(), 0);
    }

    #[test]
    fn store_map_rejects_oversized() {
        let mut s = StoreMap::new();
        assert!(!s.put(
            DhtKey::barrier(0),
            nid(1),
            vec![0; MAX_DHT_VALUE + 1],
            0,
            1000
        ));
        assert!(s.put(DhtKey::barrier(0), nid(1), vec![0; MAX_DHT_VALUE], 0, 1000));
    }

    #[test]
    fn ttl_clamped_to_ceiling() {
        let mut s = StoreMap::new();
        let key = DhtKey::barrier(9);
        s.put(key, nid(1), b"x".to_vec(), 0, u64::MAX);
        assert_eq!(s.get(&key, MAX_TTL_MS - 1).len(), 1);
        assert_eq!(s.get(&key, MAX_TTL_MS).len(), 0);
    }

    #[test]
    fn prune_drops_only_expired() {
        let mut s = StoreMap::new();
        s.put(DhtKey::barrier(1), nid(1), b"a".to_vec(), 0, 100);
        s.put(DhtKey::barrier(2), nid(2), b"b".to_vec(), 0, 10_000);
        s.prune(1000);
        assert!(s.get(&DhtKey::barrier(1), 1000).is_empty());
        assert_eq!(s.get(&DhtKey::barrier(2), 1000).len(), 1);
    }
}
