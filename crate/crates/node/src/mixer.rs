//! Mixer node: collect onions, wait on the all-mixers barrier, peel,
//! shuffle, forward or upload in waves, rotate keys each round, and stand in
//! for a dead coordinator when elected.
//!
//! Phases move strictly Collecting → Barrier → Mixing → Done, then back to
//! Collecting when the next round opens. Every transition lives in this file
//! and nothing else mutates the phase, which is what keeps the illegal ones
//! unrepresentable.

use std::collections::{BTreeMap, HashMap, HashSet};

use zephyr_core::envelope::{Address, MixerKeyPair, NetAddr, LAYER_OVERHEAD};
use zephyr_core::hash;
use zephyr_core::ids::NodeId;
use zephyr_core::proto::{
    Append, AppendOk, CloseRound, CloseRoundOk, Contact, Frame, ForwardStream, Handoff, HandoffOk,
    Heartbeat, HeartbeatOk, MixerKeyRecord, Opcode, OpenRound, OpenRoundOk, PublishKey,
    PublishKeyOk, Register, RegisterOk, ReportDone, ReportOk, Role, Rotated, RoundDirectory,
    RoundReport, StreamOk, Submit, SubmitOk, Takeover, TakeoverOk, TriggerRotation, WireMsg,
};
use zephyr_core::shuffle;
use zephyr_core::sign::{Keypair, VerifyingKey};

use crate::dht::DhtEndpoint;
use crate::runtime::{Context, Event, NodeLogic, Peer, Probe, RequestIds};

pub const BARRIER_POLL_MS: u64 = 100;
pub const BARRIER_TIMEOUT_MS: u64 = 30_000;
/// How long a mid-round wave waits for peer streams before treating the
/// silent mixers as having sent empty ones.
pub const WAVE_TIMEOUT_MS: u64 = 5_000;
pub const HEARTBEAT_MS: u64 = 1_000;
/// Consecutive unanswered heartbeats before the coordinator counts as dead.
pub const HEARTBEAT_MISSES: u32 = 3;
pub const ELECTION_WAIT_MS: u64 = 500;
pub const RECOVERY_PROBE_MS: u64 = 2_000;

const REGISTER_TOKEN: u64 = 1;
const REGISTER_RETRY_MS: u64 = 1000;
const BARRIER_POLL_TOKEN: u64 = 2;
const BARRIER_TIMEOUT_TOKEN: u64 = 3;
const WAVE_TIMEOUT_TOKEN: u64 = 4;
const HEARTBEAT_TOKEN: u64 = 5;
const ELECTION_TOKEN: u64 = 6;
const RECOVERY_TOKEN: u64 = 7;
const REPORT_RETRY_TOKEN: u64 = 8;
const ACTING_CLOSE_TOKEN: u64 = 9;
const REPORT_RETRY_MS: u64 = 1_000;
const RPC_RETRY_MS: u64 = 500;
const RPC_RETRIES: u32 = 3;
/// Request ids for mixer-originated RPCs; DHT ids live at 1<<32 and up.
const MIXER_IDS: u64 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// No round open yet (or between rounds after Done).
    Idle,
    Collecting,
    Barrier,
    Mixing,
    Done,
}

#[derive(Default)]
struct Counts {
    received: u64,
    forwarded: u64,
    uploaded: u64,
    dropped: u64,
    duplicates: u64,
}

struct PendingPublish {
    to: NetAddr,
    attempts: u32,
}

enum RotationReply {
    /// Answer the TriggerRotation frame when publishing settles.
    Remote(Peer, u64),
    /// We are the acting coordinator rotating ourselves; just mark it.
    LocalActing,
}

struct PendingRotation {
    reply: RotationReply,
    next_round: u64,
    awaiting: usize,
}

struct PendingUpload {
    to: NetAddr,
    msg: Append,
    attempts: u32,
}

struct Election {
    round: u64,
    probes: HashMap<u64, NodeId>,
    live: HashSet<NodeId>,
}

/// State a substitute coordinator carries for the remainder of one round.
struct Acting {
    round: u64,
    mixers: Vec<Contact>,
    key_service: Contact,
    reports: BTreeMap<NodeId, RoundReport>,
    rotated: HashSet<NodeId>,
    key_service_rotated: bool,
    rotation_sent: bool,
    rotation_rids: HashMap<u64, NodeId>,
    recovery_rid: Option<u64>,
    handoff_rid: Option<u64>,
}

pub struct MixerNode {
    keypair: Keypair,
    coordinator: NetAddr,
    coordinator_pk: VerifyingKey,
    info_seeds: Vec<NetAddr>,
    dht_seeds: Vec<Contact>,
    pub dht: DhtEndpoint,
    ids: RequestIds,
    registered: bool,

    onion_key: Option<MixerKeyPair>,
    /// Round the current onion key was rotated in for; answers re-triggers.
    pending_rotated_round: Option<u64>,
    directory: Option<RoundDirectory>,
    phase: Phase,
    round: u64,

    batch: Vec<Vec<u8>>,
    seen: HashSet<[u8; 32]>,
    streams: HashMap<u8, HashMap<NodeId, Vec<Vec<u8>>>>,
    current_wave: u8,
    wave_deadline: Option<(u8, u64)>,
    counts: Counts,

    barrier_lookup: Option<u64>,
    barrier_round: u64,

    report: Option<RoundReport>,
    report_rid: Option<u64>,

    publishes: HashMap<u64, PendingPublish>,
    rotation: Option<PendingRotation>,
    uploads: HashMap<u64, PendingUpload>,

    acting_coordinator: Option<NetAddr>,
    hb_armed: bool,
    hb_outstanding: Option<u64>,
    hb_missed: u32,
    election: Option<Election>,
    acting: Option<Acting>,
}

impl MixerNode {
    pub fn new(
        keypair: Keypair,
        coordinator: NetAddr,
        coordinator_pk: VerifyingKey,
        self_addr: NetAddr,
        info_seeds: Vec<NetAddr>,
        dht_seeds: &[Contact],
    ) -> Self {
        let self_contact = Contact {
            id: keypair.node_id(),
            addr: self_addr,
        };
        MixerNode {
            keypair,
            coordinator,
            coordinator_pk,
            info_seeds,
            dht_seeds: dht_seeds.to_vec(),
            dht: DhtEndpoint::new(self_contact, dht_seeds),
            ids: RequestIds::starting_at(MIXER_IDS),
            registered: false,
            onion_key: None,
            pending_rotated_round: None,
            directory: None,
            phase: Phase::Idle,
            round: 0,
            batch: Vec::new(),
            seen: HashSet::new(),
            streams: HashMap::new(),
            current_wave: 0,
            wave_deadline: None,
            counts: Counts::default(),
            barrier_lookup: None,
            barrier_round: 0,
            report: None,
            report_rid: None,
            publishes: HashMap::new(),
            rotation: None,
            uploads: HashMap::new(),
            acting_coordinator: None,
            hb_armed: false,
            hb_outstanding: None,
            hb_missed: 0,
            election: None,
            acting: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn node_id(&self) -> NodeId {
        self.keypair.node_id()
    }

    pub fn is_acting_coordinator(&self) -> bool {
        self.acting.is_some()
    }

    /// Current onion public key, if a rotation has installed one.
    pub fn onion_public(&self) -> Option<zephyr_core::envelope::MixerPublicKey> {
        self.onion_key.as_ref().map(|k| k.public.clone())
    }

    fn coordinator_addr(&self) -> NetAddr {
        self.acting_coordinator
            .clone()
            .unwrap_or_else(|| self.coordinator.clone())
    }

    fn register(&mut self, ctx: &mut dyn Context) {
        self.registered = false;
        let msg = Register {
            role: Role::Mixer,
            contact: Contact {
                id: self.keypair.node_id(),
                addr: ctx.self_addr().clone(),
            },
            public_key: self.keypair.public.as_bytes().to_vec(),
        };
        ctx.send(&self.coordinator, msg.into_frame(REGISTER_TOKEN));
        ctx.set_timer(REGISTER_RETRY_MS, REGISTER_TOKEN);
    }

    fn other_mixers(&self) -> Vec<Contact> {
        let me = self.keypair.node_id();
        self.directory
            .as_ref()
            .map(|d| d.mixers.iter().filter(|c| c.id != me).cloned().collect())
            .unwrap_or_default()
    }

    fn last_wave(&self) -> u8 {
        self.directory
            .as_ref()
            .map(|d| d.max_route_len.saturating_sub(1))
            .unwrap_or(0)
    }

    // ---- ingestion -------------------------------------------------------------

    /// Dedupe gate shared by submits and streams. Returns false for a replay.
    fn admit(&mut self, packet: &[u8]) -> bool {
        let digest = hash::derive32(b"zephyr-pkt", packet);
        if !self.seen.insert(digest) {
            self.counts.duplicates += 1;
            return false;
        }
        self.counts.received += 1;
        if packet.len() < LAYER_OVERHEAD {
            // not even one layer's worth of bytes: drop at the door
            self.counts.dropped += 1;
            return false;
        }
        true
    }

    fn on_submit(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = Submit::from_frame(frame) else {
            return;
        };
        let open = self.phase == Phase::Collecting && msg.round == self.round;
        if open {
            if self.admit(&msg.packet) {
                self.batch.push(msg.packet);
            }
        }
        ctx.reply(
            from,
            SubmitOk {
                accepted: open,
                round: self.round,
            }
            .into_frame(frame.request_id),
        );
    }

    fn on_stream(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = ForwardStream::from_frame(frame) else {
            return;
        };
        ctx.reply(
            from,
            StreamOk {
                round: self.round,
                wave: msg.wave,
            }
            .into_frame(frame.request_id),
        );
        if msg.round != self.round || self.phase == Phase::Idle || self.phase == Phase::Done {
            return;
        }
        if msg.wave == 0 || msg.wave > self.last_wave() {
            return;
        }
        // a wave that already ran never re-opens; anything new addressed to
        // it is admitted (so the counts stay honest) and dropped
        let stale = self.phase == Phase::Mixing && msg.wave < self.current_wave;
        let mut fresh = Vec::new();
        for p in msg.packets {
            if self.admit(&p) {
                if stale {
                    self.counts.dropped += 1;
                } else {
                    fresh.push(p);
                }
            }
        }
        if stale {
            return;
        }
        let slot = self.streams.entry(msg.wave).or_default();
        slot.entry(msg.from).or_default().extend(fresh);
        self.try_advance_waves(ctx);
    }

    // ---- round lifecycle -------------------------------------------------------

    fn on_open_round(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = OpenRound::from_frame(frame) else {
            return;
        };
        if !msg.directory.verify(&self.coordinator_pk) {
            log::warn!("openround with bad directory signature dropped");
            return;
        }
        let dir = msg.directory.directory;
        if self.directory.is_some() && dir.round <= self.round {
            ctx.reply(
                from,
                OpenRoundOk { round: self.round }.into_frame(frame.request_id),
            );
            return;
        }
        self.round = dir.round;
        self.directory = Some(dir);
        self.phase = Phase::Collecting;
        self.batch.clear();
        self.seen.clear();
        self.streams.clear();
        self.current_wave = 0;
        self.wave_deadline = None;
        self.counts = Counts::default();
        self.report = None;
        self.report_rid = None;
        self.barrier_lookup = None;
        // a signed open can only come from the original: failover is over
        self.acting_coordinator = None;
        self.acting = None;
        self.election = None;
        self.hb_missed = 0;
        self.hb_outstanding = None;
        if !self.hb_armed {
            self.hb_armed = true;
            ctx.set_timer(HEARTBEAT_MS, HEARTBEAT_TOKEN);
        }
        ctx.reply(
            from,
            OpenRoundOk { round: self.round }.into_frame(frame.request_id),
        );
    }

    fn on_close_round(&mut self, reply_to: Option<(&Peer, u64)>, round: u64, ctx: &mut dyn Context) {
        if let Some((peer, rid)) = reply_to {
            ctx.reply(peer, CloseRoundOk { round: self.round }.into_frame(rid));
        }
        if round != self.round || self.phase != Phase::Collecting {
            return;
        }
        self.phase = Phase::Barrier;
        self.barrier_round = self.round;
        self.dht.barrier_signal(self.round, BARRIER_TIMEOUT_MS * 2, ctx);
        ctx.probe(Probe::BarrierSignaled {
            round: self.round,
            mixer: self.keypair.node_id(),
        });
        ctx.set_timer(BARRIER_TIMEOUT_MS, BARRIER_TIMEOUT_TOKEN);
        self.poll_barrier(ctx);
        self.drain_dht(ctx);
    }

    fn poll_barrier(&mut self, ctx: &mut dyn Context) {
        if self.phase != Phase::Barrier || self.barrier_lookup.is_some() {
            return;
        }
        self.barrier_lookup = Some(self.dht.barrier_count(self.round, ctx));
    }

    fn barrier_satisfied(&mut self, ctx: &mut dyn Context) {
        let mixers = self.directory.as_ref().map(|d| d.mixers.len()).unwrap_or(1);
        ctx.probe(Probe::BarrierSatisfied {
            round: self.round,
            mixer: self.keypair.node_id(),
            mixers,
        });
        self.phase = Phase::Mixing;
        self.current_wave = 0;
        self.process_wave(ctx);
        self.try_advance_waves(ctx);
    }

    fn abort_round(&mut self, ctx: &mut dyn Context) {
        ctx.probe(Probe::BarrierTimedOut {
            round: self.round,
            mixer: self.keypair.node_id(),
        });
        let stranded = self.batch.len() as u64
            + self
                .streams
                .values()
                .flat_map(|m| m.values())
                .map(|v| v.len() as u64)
                .sum::<u64>();
        self.counts.dropped += stranded;
        self.batch.clear();
        self.streams.clear();
        self.finish_round(true, ctx);
    }

    /// Inputs for the wave: the client batch for wave 0, the buffered peer
    /// streams afterwards (in directory order, for determinism).
    fn take_wave_input(&mut self, wave: u8) -> Vec<Vec<u8>> {
        if wave == 0 {
            return std::mem::take(&mut self.batch);
        }
        let mut arrived = self.streams.remove(&wave).unwrap_or_default();
        let mut input = Vec::new();
        for c in self.other_mixers() {
            if let Some(packets) = arrived.remove(&c.id) {
                input.extend(packets);
            }
        }
        // streams from non-directory senders still hold admitted packets
        for (_, packets) in arrived {
            input.extend(packets);
        }
        input
    }

    fn process_wave(&mut self, ctx: &mut dyn Context) {
        let wave = self.current_wave;
        let input = self.take_wave_input(wave);
        let input_len = input.len();

        let Some(kp) = &self.onion_key else {
            // no key for this round (fresh recovery): everything is opaque
            self.after_wave(wave, input_len, 0, 0, input_len, ctx);
            return;
        };

        let mut opened = Vec::new();
        let mut dropped = 0usize;
        for packet in &input {
            match zephyr_core::envelope::onion_peel(kp, packet) {
                Ok(pair) => opened.push(pair),
                Err(_) => dropped += 1,
            }
        }

        let perm = shuffle::fisher_yates(opened.len(), ctx.rng());
        let shuffled = shuffle::apply(opened, &perm);

        let peer_addrs: HashSet<NetAddr> =
            self.other_mixers().into_iter().map(|c| c.addr).collect();
        let mut outgoing: BTreeMap<NetAddr, Vec<Vec<u8>>> = BTreeMap::new();
        let mut forwarded = 0usize;
        let mut uploaded = 0usize;
        let last = wave == self.last_wave();
        for (addr, inner) in shuffled {
            match addr {
                Address::Mixer(net) if !last && peer_addrs.contains(&net) => {
                    outgoing.entry(net).or_default().push(inner);
                    forwarded += 1;
                }
                Address::Mixer(_) => {
                    // no further wave will run, or the hop is not in the
                    // directory; either way the packet has nowhere to go
                    dropped += 1;
                }
                Address::Mailbox { net, mailbox_id } => {
                    let msg = Append {
                        mailbox_id,
                        round: self.round,
                        blob: inner,
                    };
                    self.send_upload(net, msg, 1, ctx);
                    uploaded += 1;
                }
            }
        }

        if !last {
            // every peer gets a stream each wave, empty ones included; the
            // stream arriving is what marks this edge complete
            for c in self.other_mixers() {
                let packets = outgoing.remove(&c.addr).unwrap_or_default();
                let rid = self.ids.allocate();
                ctx.send(
                    &c.addr,
                    ForwardStream {
                        round: self.round,
                        wave: wave + 1,
                        from: self.keypair.node_id(),
                        packets,
                    }
                    .into_frame(rid),
                );
            }
        }

        self.after_wave(wave, input_len, forwarded, uploaded, dropped, ctx);
    }

    fn after_wave(
        &mut self,
        wave: u8,
        input: usize,
        forwarded: usize,
        uploaded: usize,
        dropped: usize,
        ctx: &mut dyn Context,
    ) {
        self.counts.forwarded += forwarded as u64;
        self.counts.uploaded += uploaded as u64;
        self.counts.dropped += dropped as u64;
        ctx.probe(Probe::WaveProcessed {
            round: self.round,
            mixer: self.keypair.node_id(),
            wave,
            input,
            forwarded,
            uploaded,
            dropped,
        });
        if wave == self.last_wave() {
            self.finish_round(false, ctx);
        } else {
            self.current_wave = wave + 1;
            let deadline = ctx.now() + WAVE_TIMEOUT_MS;
            self.wave_deadline = Some((self.current_wave, deadline));
            ctx.set_timer(WAVE_TIMEOUT_MS, WAVE_TIMEOUT_TOKEN);
        }
    }

    /// Runs the current wave if every peer's stream arrived (or `force` on
    /// timeout), then keeps going while successive waves are already ready.
    fn try_advance_waves(&mut self, ctx: &mut dyn Context) {
        loop {
            if self.phase != Phase::Mixing || self.current_wave == 0 {
                return;
            }
            let expected = self.other_mixers().len();
            let got = self
                .streams
                .get(&self.current_wave)
                .map(|m| m.len())
                .unwrap_or(0);
            if got < expected {
                return;
            }
            self.process_wave(ctx);
        }
    }

    fn force_wave(&mut self, ctx: &mut dyn Context) {
        let missing = self.other_mixers().len().saturating_sub(
            self.streams
                .get(&self.current_wave)
                .map(|m| m.len())
                .unwrap_or(0),
        );
        log::warn!(
            "round {} wave {} timed out with {missing} streams missing",
            self.round,
            self.current_wave
        );
        self.process_wave(ctx);
        self.try_advance_waves(ctx);
    }

    fn finish_round(&mut self, aborted: bool, ctx: &mut dyn Context) {
        self.phase = Phase::Done;
        self.wave_deadline = None;
        let report = RoundReport {
            mixer: self.keypair.node_id(),
            round: self.round,
            received: self.counts.received,
            forwarded: self.counts.forwarded,
            uploaded: self.counts.uploaded,
            dropped: self.counts.dropped,
            duplicates: self.counts.duplicates,
            aborted,
        };
        debug_assert!(report.conserved(), "count conservation violated");
        ctx.probe(Probe::MixerDone {
            round: self.round,
            mixer: self.keypair.node_id(),
        });
        self.report = Some(report.clone());
        if let Some(acting) = &mut self.acting {
            if acting.round == self.round {
                acting.reports.insert(report.mixer, report);
                self.acting_maybe_rotate(ctx);
                return;
            }
        }
        self.send_report(ctx);
    }

    fn send_report(&mut self, ctx: &mut dyn Context) {
        let Some(report) = self.report.clone() else {
            return;
        };
        let rid = self.ids.allocate();
        self.report_rid = Some(rid);
        ctx.send(
            &self.coordinator_addr(),
            ReportDone { report }.into_frame(rid),
        );
        ctx.set_timer(REPORT_RETRY_MS, REPORT_RETRY_TOKEN);
    }

    fn send_upload(&mut self, to: NetAddr, msg: Append, attempts: u32, ctx: &mut dyn Context) {
        let rid = self.ids.allocate();
        ctx.send(&to, msg.clone().into_frame(rid));
        ctx.set_timer(RPC_RETRY_MS, rid);
        self.uploads.insert(rid, PendingUpload { to, msg, attempts });
    }

    // ---- rotation --------------------------------------------------------------

    fn info_targets(&self) -> Vec<NetAddr> {
        match &self.directory {
            Some(d) => d.info_nodes.iter().map(|c| c.addr.clone()).collect(),
            None => self.info_seeds.clone(),
        }
    }

    fn publish_record(&mut self, to: NetAddr, attempts: u32, ctx: &mut dyn Context) {
        let Some(kp) = &self.onion_key else {
            return;
        };
        let Some(rot) = &self.rotation else {
            return;
        };
        let record = MixerKeyRecord {
            mixer_id: self.keypair.node_id(),
            round: rot.next_round,
            public_key: kp.public.clone(),
            address: ctx.self_addr().clone(),
            published_at_ms: ctx.now(),
        };
        let rid = self.ids.allocate();
        ctx.send(&to, PublishKey { record }.into_frame(rid));
        ctx.set_timer(RPC_RETRY_MS, rid);
        self.publishes.insert(rid, PendingPublish { to, attempts });
    }

    fn start_rotation(&mut self, reply: RotationReply, next_round: u64, ctx: &mut dyn Context) {
        // the old secret dies here; round-r packets become unopenable
        self.onion_key = Some(MixerKeyPair::generate(self.keypair.node_id(), ctx.rng()));
        self.publishes.clear();
        let targets = self.info_targets();
        self.rotation = Some(PendingRotation {
            reply,
            next_round,
            awaiting: targets.len(),
        });
        for to in targets {
            self.publish_record(to, 1, ctx);
        }
        self.finish_rotation_if_done(ctx);
    }

    fn finish_rotation_if_done(&mut self, ctx: &mut dyn Context) {
        let done = self.rotation.as_ref().is_some_and(|r| r.awaiting == 0);
        if !done {
            return;
        }
        let rot = self.rotation.take().unwrap();
        match rot.reply {
            RotationReply::Remote(peer, rid) => {
                ctx.reply(
                    &peer,
                    Rotated {
                        next_round: rot.next_round,
                        node: self.keypair.node_id(),
                    }
                    .into_frame(rid),
                );
            }
            RotationReply::LocalActing => {
                let id = self.keypair.node_id();
                if let Some(acting) = &mut self.acting {
                    acting.rotated.insert(id);
                }
                self.acting_maybe_finish(ctx);
            }
        }
    }

    fn on_trigger_rotation(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = TriggerRotation::from_frame(frame) else {
            return;
        };
        // a re-trigger for the round we already rotated into is a lost-ack
        // retry; re-keying would orphan the record the info nodes hold
        if self.pending_rotated_round == Some(msg.next_round) {
            match &mut self.rotation {
                Some(rot) => {
                    if matches!(rot.reply, RotationReply::Remote(..)) {
                        // publishes still in flight; answer the retry instead
                        rot.reply = RotationReply::Remote(from.clone(), frame.request_id);
                    }
                }
                None => {
                    ctx.reply(
                        from,
                        Rotated {
                            next_round: msg.next_round,
                            node: self.keypair.node_id(),
                        }
                        .into_frame(frame.request_id),
                    );
                }
            }
            return;
        }
        self.pending_rotated_round = Some(msg.next_round);
        self.start_rotation(
            RotationReply::Remote(from.clone(), frame.request_id),
            msg.next_round,
            ctx,
        );
    }

    // ---- heartbeat and failover --------------------------------------------------

    fn on_heartbeat_tick(&mut self, ctx: &mut dyn Context) {
        ctx.set_timer(HEARTBEAT_MS, HEARTBEAT_TOKEN);
        if self.directory.is_none() || self.acting.is_some() {
            return;
        }
        if self.hb_outstanding.is_some() {
            self.hb_missed += 1;
            self.hb_outstanding = None;
            if self.hb_missed >= HEARTBEAT_MISSES && self.election.is_none() {
                self.start_election(ctx);
                return;
            }
        }
        let rid = self.ids.allocate();
        self.hb_outstanding = Some(rid);
        ctx.send(
            &self.coordinator_addr(),
            Heartbeat {
                from: self.keypair.node_id(),
                round: self.round,
            }
            .into_frame(rid),
        );
    }

    fn start_election(&mut self, ctx: &mut dyn Context) {
        log::warn!(
            "coordinator silent for {HEARTBEAT_MISSES} beats, probing mixers for election"
        );
        let mut probes = HashMap::new();
        for c in self.other_mixers() {
            let rid = self.ids.allocate();
            ctx.send(
                &c.addr,
                Heartbeat {
                    from: self.keypair.node_id(),
                    round: self.round,
                }
                .into_frame(rid),
            );
            probes.insert(rid, c.id);
        }
        let mut live = HashSet::new();
        live.insert(self.keypair.node_id());
        self.election = Some(Election {
            round: self.round,
            probes,
            live,
        });
        ctx.set_timer(ELECTION_WAIT_MS, ELECTION_TOKEN);
    }

    fn finish_election(&mut self, ctx: &mut dyn Context) {
        let Some(election) = self.election.take() else {
            return;
        };
        if election.round != self.round || self.acting_coordinator.is_some() {
            return; // someone already took over, or the world moved on
        }
        let me = self.keypair.node_id();
        let winner = election.live.iter().min().copied().unwrap_or(me);
        if winner != me {
            // the winner will announce itself; resume monitoring in case it
            // never does
            self.hb_missed = 0;
            return;
        }
        self.become_acting(ctx);
    }

    fn become_acting(&mut self, ctx: &mut dyn Context) {
        let Some(dir) = self.directory.clone() else {
            return;
        };
        ctx.probe(Probe::TakeoverAnnounced {
            round: self.round,
            acting: self.keypair.node_id(),
        });
        let acting_contact = Contact {
            id: self.keypair.node_id(),
            addr: ctx.self_addr().clone(),
        };
        for c in dir
            .mixers
            .iter()
            .filter(|c| c.id != acting_contact.id)
            .chain([&dir.mailbox, &dir.key_service])
            .chain(dir.info_nodes.iter())
        {
            let rid = self.ids.allocate();
            ctx.send(
                &c.addr,
                Takeover {
                    round: self.round,
                    acting: acting_contact.clone(),
                }
                .into_frame(rid),
            );
        }
        self.acting = Some(Acting {
            round: self.round,
            mixers: dir.mixers.clone(),
            key_service: dir.key_service.clone(),
            reports: BTreeMap::new(),
            rotated: HashSet::new(),
            key_service_rotated: false,
            rotation_sent: false,
            rotation_rids: HashMap::new(),
            recovery_rid: None,
            handoff_rid: None,
        });
        // our own finished report counts; it no longer travels by frame
        if let Some(report) = self.report.clone() {
            if report.round == self.round {
                if let Some(acting) = &mut self.acting {
                    acting.reports.insert(report.mixer, report);
                }
                self.report_rid = None;
            }
        }
        // if the coordinator died before cutting collection, we cut it now
        if self.phase == Phase::Collecting {
            let close_at = dir.open_time_ms + dir.round_duration_ms;
            let now = ctx.now();
            if now >= close_at {
                self.acting_close(ctx);
            } else {
                ctx.set_timer(close_at - now, ACTING_CLOSE_TOKEN);
            }
        } else {
            self.acting_maybe_rotate(ctx);
        }
    }

    fn acting_close(&mut self, ctx: &mut dyn Context) {
        let Some(acting) = &self.acting else {
            return;
        };
        let round = acting.round;
        for c in acting.mixers.clone() {
            if c.id == self.keypair.node_id() {
                continue;
            }
            let rid = self.ids.allocate();
            ctx.send(&c.addr, CloseRound { round }.into_frame(rid));
        }
        ctx.probe(Probe::RoundClosed { round });
        self.on_close_round(None, round, ctx);
    }

    fn acting_maybe_rotate(&mut self, ctx: &mut dyn Context) {
        let ready = self.acting.as_ref().is_some_and(|a| {
            !a.rotation_sent && a.reports.len() == a.mixers.len()
        });
        if !ready {
            return;
        }
        let (round, mixers, key_service) = {
            let a = self.acting.as_ref().unwrap();
            (a.round, a.mixers.clone(), a.key_service.clone())
        };
        let next_round = round + 1;
        ctx.probe(Probe::RotationStarted { next_round });
        let me = self.keypair.node_id();
        let mut rids = HashMap::new();
        for c in mixers.iter().filter(|c| c.id != me) {
            let rid = self.ids.allocate();
            ctx.send(&c.addr, TriggerRotation { next_round }.into_frame(rid));
            rids.insert(rid, c.id);
        }
        let ks_rid = self.ids.allocate();
        ctx.send(
            &key_service.addr,
            TriggerRotation { next_round }.into_frame(ks_rid),
        );
        rids.insert(ks_rid, key_service.id);
        if let Some(a) = &mut self.acting {
            a.rotation_sent = true;
            a.rotation_rids = rids;
        }
        // rotate ourselves through the same publish path
        self.pending_rotated_round = Some(next_round);
        self.start_rotation(RotationReply::LocalActing, next_round, ctx);
    }

    fn acting_maybe_finish(&mut self, ctx: &mut dyn Context) {
        let ready = self.acting.as_ref().is_some_and(|a| {
            a.rotation_sent
                && a.key_service_rotated
                && a.mixers.iter().all(|c| a.rotated.contains(&c.id))
                && a.recovery_rid.is_none()
        });
        if ready {
            ctx.probe(Probe::RoundComplete {
                round: self.acting.as_ref().unwrap().round,
            });
            self.probe_original(ctx);
            ctx.set_timer(RECOVERY_PROBE_MS, RECOVERY_TOKEN);
        }
    }

    fn probe_original(&mut self, ctx: &mut dyn Context) {
        let rid = self.ids.allocate();
        if let Some(a) = &mut self.acting {
            a.recovery_rid = Some(rid);
        }
        let round = self.round;
        ctx.send(
            &self.coordinator,
            Heartbeat {
                from: self.keypair.node_id(),
                round,
            }
            .into_frame(rid),
        );
    }

    fn send_handoff(&mut self, ctx: &mut dyn Context) {
        let Some(a) = &mut self.acting else {
            return;
        };
        let rid = self.ids.allocate();
        a.handoff_rid = Some(rid);
        let msg = Handoff {
            completed_round: a.round,
            reports: a.reports.values().cloned().collect(),
            rotated: a.rotated.iter().copied().collect(),
            key_service_rotated: a.key_service_rotated,
        };
        ctx.send(&self.coordinator, msg.into_frame(rid));
    }

    fn on_heartbeat_ok(&mut self, frame: &Frame, ctx: &mut dyn Context) {
        let rid = frame.request_id;
        if self.hb_outstanding == Some(rid) {
            self.hb_outstanding = None;
            self.hb_missed = 0;
            return;
        }
        if let Some(e) = &mut self.election {
            if let Some(id) = e.probes.remove(&rid) {
                e.live.insert(id);
                return;
            }
        }
        let probed = self
            .acting
            .as_ref()
            .is_some_and(|a| a.recovery_rid == Some(rid));
        if probed {
            if let Some(a) = &mut self.acting {
                a.recovery_rid = None;
            }
            self.send_handoff(ctx);
        }
    }

    fn on_takeover(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = Takeover::from_frame(frame) else {
            return;
        };
        ctx.reply(
            from,
            TakeoverOk { round: self.round }.into_frame(frame.request_id),
        );
        if msg.round != self.round {
            return;
        }
        let me = self.keypair.node_id();
        if let Some(a) = &self.acting {
            // simultaneous takeovers resolve by id, same rule as the election
            if msg.acting.id < me && a.round == msg.round {
                self.acting = None;
            } else {
                return;
            }
        }
        self.acting_coordinator = Some(msg.acting.addr);
        self.election = None;
        self.hb_missed = 0;
        self.hb_outstanding = None;
        // a pending report goes to the substitute now
        if self.report_rid.is_some() {
            self.send_report(ctx);
        }
    }

    // ---- acting-coordinator inbound ------------------------------------------------

    fn acting_on_report(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) -> bool {
        if self.acting.is_none() {
            return false;
        }
        let Ok(msg) = ReportDone::from_frame(frame) else {
            return true;
        };
        ctx.reply(from, ReportOk {}.into_frame(frame.request_id));
        if let Some(a) = &mut self.acting {
            if msg.report.round == a.round {
                a.reports.insert(msg.report.mixer, msg.report);
            }
        }
        self.acting_maybe_rotate(ctx);
        true
    }

    fn acting_on_rotated(&mut self, frame: &Frame, ctx: &mut dyn Context) -> bool {
        let Some(a) = &mut self.acting else {
            return false;
        };
        let Ok(msg) = Rotated::from_frame(frame) else {
            return true;
        };
        if let Some(id) = a.rotation_rids.remove(&frame.request_id) {
            if id == a.key_service.id {
                a.key_service_rotated = true;
            } else if msg.node == id {
                a.rotated.insert(id);
            }
            self.acting_maybe_finish(ctx);
            return true;
        }
        false
    }

    // ---- dispatch --------------------------------------------------------------

    fn drain_dht(&mut self, ctx: &mut dyn Context) {
        for done in self.dht.take_completed() {
            if Some(done.handle) == self.barrier_lookup {
                self.barrier_lookup = None;
                if self.phase != Phase::Barrier {
                    continue;
                }
                let count = match &done.outcome {
                    crate::dht::LookupOutcome::Values(v) => v.len(),
                    _ => 0,
                };
                let mixers = self.directory.as_ref().map(|d| d.mixers.len()).unwrap_or(1);
                if count >= mixers {
                    self.barrier_satisfied(ctx);
                } else {
                    ctx.set_timer(BARRIER_POLL_MS, BARRIER_POLL_TOKEN);
                }
            }
        }
    }

    fn on_frame(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        if self.dht.handle_frame(from, frame, ctx) {
            self.drain_dht(ctx);
            return;
        }
        match frame.opcode {
            Opcode::RegisterOk => {
                if RegisterOk::from_frame(frame).is_ok() {
                    self.registered = true;
                }
            }
            Opcode::OpenRound => self.on_open_round(from, frame, ctx),
            Opcode::CloseRound => {
                if let Ok(msg) = CloseRound::from_frame(frame) {
                    self.on_close_round(Some((from, frame.request_id)), msg.round, ctx);
                }
            }
            Opcode::Submit => self.on_submit(from, frame, ctx),
            Opcode::ForwardStream => self.on_stream(from, frame, ctx),
            Opcode::StreamOk => {}
            Opcode::TriggerRotation => self.on_trigger_rotation(from, frame, ctx),
            Opcode::PublishKeyOk => {
                if PublishKeyOk::from_frame(frame).is_err() {
                    return;
                }
                if self.publishes.remove(&frame.request_id).is_some() {
                    if let Some(r) = &mut self.rotation {
                        r.awaiting -= 1;
                    }
                    self.finish_rotation_if_done(ctx);
                }
            }
            Opcode::AppendOk => {
                if AppendOk::from_frame(frame).is_ok() {
                    self.uploads.remove(&frame.request_id);
                }
            }
            Opcode::ReportOk => {
                if self.report_rid == Some(frame.request_id) {
                    self.report_rid = None;
                }
            }
            Opcode::Heartbeat => {
                if Heartbeat::from_frame(frame).is_ok() {
                    ctx.reply(
                        from,
                        HeartbeatOk { round: self.round }.into_frame(frame.request_id),
                    );
                }
            }
            Opcode::HeartbeatOk => self.on_heartbeat_ok(frame, ctx),
            Opcode::Takeover => self.on_takeover(from, frame, ctx),
            Opcode::TakeoverOk => {}
            Opcode::ReportDone => {
                self.acting_on_report(from, frame, ctx);
            }
            Opcode::Rotated => {
                self.acting_on_rotated(frame, ctx);
            }
            Opcode::HandoffOk => {
                let handed = self
                    .acting
                    .as_ref()
                    .is_some_and(|a| a.handoff_rid == Some(frame.request_id));
                if handed {
                    if let Ok(msg) = HandoffOk::from_frame(frame) {
                        if msg.accepted {
                            self.acting = None;
                            self.hb_missed = 0;
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut dyn Context) {
        if self.dht.handle_timer(token, ctx) {
            self.drain_dht(ctx);
            return;
        }
        match token {
            REGISTER_TOKEN => {
                if !self.registered {
                    self.register(ctx);
                }
            }
            BARRIER_POLL_TOKEN => self.poll_barrier(ctx),
            BARRIER_TIMEOUT_TOKEN => {
                if self.phase == Phase::Barrier && self.barrier_round == self.round {
                    self.abort_round(ctx);
                }
            }
            WAVE_TIMEOUT_TOKEN => {
                if self.phase == Phase::Mixing {
                    if let Some((wave, at)) = self.wave_deadline {
                        if wave == self.current_wave && ctx.now() >= at {
                            self.force_wave(ctx);
                        }
                    }
                }
            }
            HEARTBEAT_TOKEN => self.on_heartbeat_tick(ctx),
            ELECTION_TOKEN => self.finish_election(ctx),
            RECOVERY_TOKEN => {
                let waiting = self.acting.as_ref().is_some_and(|a| a.rotation_sent);
                if waiting {
                    self.probe_original(ctx);
                    ctx.set_timer(RECOVERY_PROBE_MS, RECOVERY_TOKEN);
                }
            }
            ACTING_CLOSE_TOKEN => {
                if self.acting.is_some() && self.phase == Phase::Collecting {
                    self.acting_close(ctx);
                }
            }
            REPORT_RETRY_TOKEN => {
                if self.report_rid.is_some() {
                    self.send_report(ctx);
                }
            }
            rid => {
                if let Some(p) = self.publishes.remove(&rid) {
                    if p.attempts < RPC_RETRIES && self.rotation.is_some() {
                        self.publish_record(p.to, p.attempts + 1, ctx);
                    } else {
                        log::warn!("key publish to {} abandoned", p.to);
                        if let Some(r) = &mut self.rotation {
                            r.awaiting -= 1;
                        }
                        self.finish_rotation_if_done(ctx);
                    }
                } else if let Some(u) = self.uploads.remove(&rid) {
                    if u.attempts < RPC_RETRIES {
                        self.send_upload(u.to, u.msg, u.attempts + 1, ctx);
                    } else {
                        log::warn!("mailbox upload abandoned after {} tries", u.attempts);
                    }
                }
            }
        }
    }
}

impl NodeLogic for MixerNode {
    fn handle(&mut self, event: Event, ctx: &mut dyn Context) {
        match event {
            Event::Started => {
                self.register(ctx);
                self.dht.bootstrap(ctx);
                self.drain_dht(ctx);
            }
            Event::Recovered => {
                // the onion secret and all round state are memory-only; we
                // come back blind and wait to be re-keyed and re-included
                let self_contact = Contact {
                    id: self.keypair.node_id(),
                    addr: ctx.self_addr().clone(),
                };
                self.dht = DhtEndpoint::new(self_contact, &self.dht_seeds);
                self.onion_key = None;
                self.pending_rotated_round = None;
                self.directory = None;
                self.phase = Phase::Idle;
                self.round = 0;
                self.batch.clear();
                self.seen.clear();
                self.streams.clear();
                self.counts = Counts::default();
                self.report = None;
                self.report_rid = None;
                self.publishes.clear();
                self.rotation = None;
                self.uploads.clear();
                self.acting_coordinator = None;
                self.election = None;
                self.acting = None;
                self.hb_armed = false;
                self.hb_outstanding = None;
                self.hb_missed = 0;
                self.register(ctx);
                self.dht.bootstrap(ctx);
                self.drain_dht(ctx);
            }
            Event::Timer { token } => self.on_timer(token, ctx),
            Event::Frame { from, frame } => self.on_frame(&from, &frame, ctx),
            Event::Email { .. } => {}
        }
    }

    fn footprint(&self) -> u64 {
        let batched: u64 = self.batch.iter().map(|p| p.len() as u64).sum();
        let streamed: u64 = self
            .streams
            .values()
            .flat_map(|m| m.values())
            .flat_map(|v| v.iter())
            .map(|p| p.len() as u64)
            .sum();
        batched + streamed + self.dht.footprint()
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
