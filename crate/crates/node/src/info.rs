//! Info node: accepts mixer key publications and master params, replicates
//! them over the DHT, and serves complete key bundles to clients.
//!
//! The local maps are the fast path; the overlay is the healing path. A
//! fetch that finds gaps starts value lookups for exactly the missing pieces
//! and answers when they settle, so one reachable info node is enough for a
//! client even when publications went elsewhere.

use std::collections::{BTreeMap, HashSet};

use zephyr_core::envelope::NetAddr;
use zephyr_core::ids::{DhtKey, NodeId};
use zephyr_core::proto::{
    Contact, FetchBundle, FetchBundleOk, Frame, KeyBundle, MixerKeyRecord, Opcode, OpenRound,
    OpenRoundOk, ParamsBundle, PublishKey, PublishKeyOk, PublishParams, PublishParamsOk, Register,
    RegisterOk, Role, SignedDirectory, WireMsg, BUNDLE_STATUS_INCOMPLETE, BUNDLE_STATUS_OK,
    BUNDLE_STATUS_UNKNOWN_ROUND, ROUND_LATEST,
};
use zephyr_core::sign::{Keypair, VerifyingKey};

use crate::dht::{DhtEndpoint, LookupOutcome};
use crate::runtime::{Context, Event, NodeLogic, Peer};

const REGISTER_TOKEN: u64 = 1;
const REGISTER_RETRY_MS: u64 = 1000;
/// TTL for replicated records and params. Long enough to outlive the round
/// they serve plus the next; the overlay clamps it anyway.
const REPLICA_TTL_MS: u64 = 3_600_000;

struct PendingFetch {
    peer: Peer,
    request_id: u64,
    round: u64,
    awaiting: HashSet<u64>,
}

pub struct InfoNode {
    keypair: Keypair,
    coordinator: NetAddr,
    coordinator_pk: VerifyingKey,
    pub dht: DhtEndpoint,
    seeds: Vec<Contact>,
    registered: bool,
    current_round: Option<u64>,
    directories: BTreeMap<u64, SignedDirectory>,
    records: BTreeMap<u64, BTreeMap<NodeId, MixerKeyRecord>>,
    params: BTreeMap<u64, ParamsBundle>,
    pending: Vec<PendingFetch>,
}

impl InfoNode {
    pub fn new(
        keypair: Keypair,
        coordinator: NetAddr,
        coordinator_pk: VerifyingKey,
        self_addr: NetAddr,
        dht_seeds: &[Contact],
    ) -> Self {
        let self_contact = Contact {
            id: keypair.node_id(),
            addr: self_addr,
        };
        InfoNode {
            keypair,
            coordinator,
            coordinator_pk,
            dht: DhtEndpoint::new(self_contact, dht_seeds),
            seeds: dht_seeds.to_vec(),
            registered: false,
            current_round: None,
            directories: BTreeMap::new(),
            records: BTreeMap::new(),
            params: BTreeMap::new(),
            pending: Vec::new(),
        }
    }

    pub fn current_round(&self) -> Option<u64> {
        self.current_round
    }

    fn register(&mut self, ctx: &mut dyn Context) {
        self.registered = false;
        let msg = Register {
            role: Role::InfoNode,
            contact: Contact {
                id: self.keypair.node_id(),
                addr: ctx.self_addr().clone(),
            },
            public_key: self.keypair.public.as_bytes().to_vec(),
        };
        ctx.send(&self.coordinator, msg.into_frame(REGISTER_TOKEN));
        ctx.set_timer(REGISTER_RETRY_MS, REGISTER_TOKEN);
    }

    /// Keeps `rec` only if it is the newest seen for its (mixer, round).
    /// Ordered by (published_at, bytes) so every node picks the same winner
    /// regardless of arrival order; that is what makes bundles byte-identical
    /// across info nodes.
    fn absorb_record(&mut self, rec: MixerKeyRecord) {
        let slot = self.records.entry(rec.round).or_default();
        match slot.get(&rec.mixer_id) {
            Some(held) if (held.published_at_ms, held.encode()) >= (rec.published_at_ms, rec.encode()) => {}
            _ => {
                slot.insert(rec.mixer_id, rec);
            }
        }
    }

    fn absorb_params(&mut self, p: ParamsBundle) {
        self.params.entry(p.round).or_insert(p);
    }

    /// Sweep this node's own overlay store for pieces the round still lacks.
    fn absorb_from_store(&mut self, round: u64, now: u64) {
        let Some(dir) = self.directories.get(&round) else {
            return;
        };
        let mixers: Vec<NodeId> = dir.directory.mixer_ids().collect();
        for mixer in mixers {
            let have = self
                .records
                .get(&round)
                .is_some_and(|m| m.contains_key(&mixer));
            if have {
                continue;
            }
            for v in self.dht.store.get(&DhtKey::mixer_key(&mixer, round), now) {
                if let Ok(rec) = MixerKeyRecord::decode(&v.data) {
                    if rec.mixer_id == mixer && rec.round == round {
                        self.absorb_record(rec);
                    }
                }
            }
        }
        if !self.params.contains_key(&round) {
            for v in self.dht.store.get(&DhtKey::round_params(round), now) {
                if let Ok(p) = ParamsBundle::decode(&v.data) {
                    if p.round == round {
                        self.absorb_params(p);
                    }
                }
            }
        }
    }

    /// Directory mixers without a local record, plus whether params are
    /// missing. `None` means the round has no directory at all.
    fn gaps(&self, round: u64) -> Option<(Vec<NodeId>, bool)> {
        let dir = self.directories.get(&round)?;
        let held = self.records.get(&round);
        let missing = dir
            .directory
            .mixer_ids()
            .filter(|m| !held.is_some_and(|h| h.contains_key(m)))
            .collect();
        Some((missing, !self.params.contains_key(&round)))
    }

    fn build_bundle(&self, round: u64) -> Option<KeyBundle> {
        let dir = self.directories.get(&round)?;
        let held = self.records.get(&round)?;
        let mut records = Vec::new();
        for mixer in dir.directory.mixer_ids() {
            records.push(held.get(&mixer)?.clone());
        }
        Some(KeyBundle {
            round,
            directory: dir.clone(),
            records,
            params: self.params.get(&round)?.clone(),
        })
    }

    fn answer_fetch(&self, round: u64, request_id: u64) -> Frame {
        let reply = match self.gaps(round) {
            None => FetchBundleOk {
                status: BUNDLE_STATUS_UNKNOWN_ROUND,
                bundle: None,
                missing: Vec::new(),
            },
            Some((missing, params_missing)) if missing.is_empty() && !params_missing => {
                FetchBundleOk {
                    status: BUNDLE_STATUS_OK,
                    bundle: Some(self.build_bundle(round).expect("no gaps")),
                    missing: Vec::new(),
                }
            }
            Some((missing, _)) => FetchBundleOk {
                status: BUNDLE_STATUS_INCOMPLETE,
                bundle: None,
                missing,
            },
        };
        reply.into_frame(request_id)
    }

    fn on_fetch(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = FetchBundle::from_frame(frame) else {
            return;
        };
        let round = if msg.round == ROUND_LATEST {
            match self.current_round {
                Some(r) => r,
                None => {
                    let reply = FetchBundleOk {
                        status: BUNDLE_STATUS_UNKNOWN_ROUND,
                        bundle: None,
                        missing: Vec::new(),
                    };
                    ctx.reply(from, reply.into_frame(frame.request_id));
                    return;
                }
            }
        } else {
            msg.round
        };
        self.absorb_from_store(round, ctx.now());
        match self.gaps(round) {
            Some((missing, params_missing)) if !missing.is_empty() || params_missing => {
                // chase exactly the gaps through the overlay, answer on settle
                let mut awaiting = HashSet::new();
                for mixer in &missing {
                    awaiting.insert(
                        self.dht
                            .lookup_value(DhtKey::mixer_key(mixer, round), ctx),
                    );
                }
                if params_missing {
                    awaiting.insert(self.dht.lookup_value(DhtKey::round_params(round), ctx));
                }
                self.pending.push(PendingFetch {
                    peer: from.clone(),
                    request_id: frame.request_id,
                    round,
                    awaiting,
                });
                self.drain_completions(ctx);
            }
            _ => ctx.reply(from, self.answer_fetch(round, frame.request_id)),
        }
    }

    /// Fold finished overlay lookups back into local state and answer any
    /// fetch that has nothing left to wait for.
    fn drain_completions(&mut self, ctx: &mut dyn Context) {
        loop {
            let completed = self.dht.take_completed();
            if completed.is_empty() {
                break;
            }
            for done in completed {
                if let LookupOutcome::Values(values) = &done.outcome {
                    for v in values {
                        if let Ok(rec) = MixerKeyRecord::decode(&v.data) {
                            self.absorb_record(rec);
                        } else if let Ok(p) = ParamsBundle::decode(&v.data) {
                            self.absorb_params(p);
                        }
                    }
                }
                for p in &mut self.pending {
                    p.awaiting.remove(&done.handle);
                }
            }
            let (ready, waiting): (Vec<PendingFetch>, Vec<PendingFetch>) = self
                .pending
                .drain(..)
                .partition(|p| p.awaiting.is_empty());
            self.pending = waiting;
            for p in ready {
                ctx.reply(&p.peer, self.answer_fetch(p.round, p.request_id));
            }
        }
    }

    fn on_frame(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        if self.dht.handle_frame(from, frame, ctx) {
            self.drain_completions(ctx);
            return;
        }
        match frame.opcode {
            Opcode::RegisterOk => {
                if RegisterOk::from_frame(frame).is_ok() {
                    self.registered = true;
                }
            }
            Opcode::OpenRound => {
                let Ok(msg) = OpenRound::from_frame(frame) else {
                    return;
                };
                if !msg.directory.verify(&self.coordinator_pk) {
                    log::warn!("openround with bad directory signature dropped");
                    return;
                }
                let round = msg.directory.directory.round;
                if self.current_round.is_some_and(|cur| round < cur) {
                    return;
                }
                self.directories.insert(round, msg.directory);
                self.current_round = Some(round);
                // current and previous rounds stay servable, older state goes
                let keep = round.saturating_sub(1);
                self.directories.retain(|&r, _| r >= keep);
                self.records.retain(|&r, _| r >= keep);
                self.params.retain(|&r, _| r >= keep);
                ctx.reply(from, OpenRoundOk { round }.into_frame(frame.request_id));
            }
            Opcode::PublishKey => {
                let Ok(msg) = PublishKey::from_frame(frame) else {
                    return;
                };
                // publications for rounds already past are useless to clients
                let stale = self
                    .current_round
                    .is_some_and(|cur| msg.record.round < cur);
                if !stale {
                    let key = DhtKey::mixer_key(&msg.record.mixer_id, msg.record.round);
                    let data = msg.record.encode();
                    self.absorb_record(msg.record);
                    self.dht.put(key, data, REPLICA_TTL_MS, ctx);
                    self.drain_completions(ctx);
                }
                ctx.reply(
                    from,
                    PublishKeyOk { accepted: !stale }.into_frame(frame.request_id),
                );
            }
            Opcode::PublishParams => {
                let Ok(msg) = PublishParams::from_frame(frame) else {
                    return;
                };
                let stale = self
                    .current_round
                    .is_some_and(|cur| msg.params.round < cur);
                if !stale {
                    let key = DhtKey::round_params(msg.params.round);
                    let data = msg.params.encode();
                    self.absorb_params(msg.params);
                    self.dht.put(key, data, REPLICA_TTL_MS, ctx);
                    self.drain_completions(ctx);
                }
                ctx.reply(from, PublishParamsOk {}.into_frame(frame.request_id));
            }
            Opcode::FetchBundle => self.on_fetch(from, frame, ctx),
            _ => {}
        }
    }
}

impl NodeLogic for InfoNode {
    fn handle(&mut self, event: Event, ctx: &mut dyn Context) {
        match event {
            Event::Started => {
                self.register(ctx);
                self.dht.bootstrap(ctx);
                self.drain_completions(ctx);
            }
            Event::Recovered => {
                // everything here is in-memory, including the overlay store;
                // peers re-fill it on demand
                self.current_round = None;
                self.directories.clear();
                self.records.clear();
                self.params.clear();
                self.pending.clear();
                let self_contact = Contact {
                    id: self.keypair.node_id(),
                    addr: ctx.self_addr().clone(),
                };
                self.dht = DhtEndpoint::new(self_contact, &self.seeds);
                self.register(ctx);
                self.dht.bootstrap(ctx);
                self.drain_completions(ctx);
            }
            Event::Timer { token } => {
                if self.dht.handle_timer(token, ctx) {
                    self.drain_completions(ctx);
                } else if token == REGISTER_TOKEN && !self.registered {
                    self.register(ctx);
                }
            }
            Event::Frame { from, frame } => self.on_frame(&from, &frame, ctx),
            Event::Email { .. } => {}
        }
    }

    fn footprint(&self) -> u64 {
        let records: u64 = self
            .records
            .values()
            .map(|m| m.values().map(|r| r.encode().len() as u64).sum::<u64>())
            .sum();
        records + self.dht.footprint()
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
