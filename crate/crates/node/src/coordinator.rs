//! Round lifecycle authority.
//!
//! One coordinator drives the system: it collects registrations, triggers
//! key rotation, signs and publishes the per-round directory, closes each
//! round on a timer, and collects the mixers' conservation reports. It is
//! trusted but crash-prone. When its heartbeat replies stop, the mixers
//! elect a substitute that finishes the round; the substitute hands the
//! completed round back through [`Handoff`] once the original answers
//! again, and the next signed OpenRound puts it back in charge everywhere.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::RngCore;

use zephyr_core::ids::{DhtKey, NodeId};
use zephyr_core::proto::{
    CloseRound, Contact, Frame, Handoff, HandoffOk, Heartbeat, HeartbeatOk, Opcode, OpenRound,
    Register, RegisterOk, ReportDone, ReportOk, Role, Rotated, RoundDirectory, RoundReport,
    SignedDirectory, TriggerRotation, WireMsg,
};
use zephyr_core::sign::Keypair;

use crate::dht::DhtEndpoint;
use crate::runtime::{Context, Event, NodeLogic, Peer, Probe, RequestIds};

/// Wall-clock length of a round's collection window.
pub const ROUND_DURATION_MS: u64 = 10_000;
/// How long after close the coordinator waits for missing reports.
pub const REPORT_TIMEOUT_MS: u64 = 10_000;
/// How long a rotation may run before laggards are dropped from the next
/// directory.
pub const ROTATION_TIMEOUT_MS: u64 = 10_000;
/// Grace period after a restart in which the coordinator only listens. A
/// substitute probing every [`crate::mixer::RECOVERY_PROBE_MS`] lands at
/// least twice inside it, so a finished takeover is always discovered
/// before the original starts driving again.
pub const HANDOFF_GRACE_MS: u64 = 5_000;

const CLOSE_TOKEN: u64 = 1;
const REPORT_TIMEOUT_TOKEN: u64 = 2;
const ROTATION_TIMEOUT_TOKEN: u64 = 3;
const HANDOFF_GRACE_TOKEN: u64 = 4;
const SEND_RETRY_MS: u64 = 500;
const SEND_RETRIES: u32 = 3;
/// Request ids for coordinator RPCs; DHT ids live at 1<<32 and up.
const COORD_IDS: u64 = 0x2000;

/// Where the round stands. Mirrors the directory the participants hold:
/// Open accepts client packets, Mixing waits on reports, Closing is the
/// instant every report is in, Rotating waits on fresh keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for the roster to fill before the first rotation.
    Idle,
    Open,
    Mixing,
    Closing,
    Rotating,
    /// Just restarted: listening for a substitute's handoff before touching
    /// anything.
    Recovering,
}

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    /// Registrations required before round 1 can start.
    pub mixers: usize,
    pub info_nodes: usize,
    pub round_duration_ms: u64,
    pub max_route_len: u8,
    pub mailbox_count: u32,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        CoordinatorConfig {
            mixers: 3,
            info_nodes: 1,
            round_duration_ms: ROUND_DURATION_MS,
            max_route_len: 5,
            mailbox_count: 16,
        }
    }
}

/// One in-flight rotation towards `next_round`. Confirmations may arrive
/// before the trigger is even sent (a substitute already ran part of the
/// rotation and handed the set over), so this doubles as the ledger of who
/// is eligible for the next directory.
#[derive(Debug)]
struct Rotation {
    next_round: u64,
    confirmed: BTreeSet<NodeId>,
    key_service: bool,
}

/// An unacknowledged OpenRound/CloseRound send on its retry ladder.
struct PendingSend {
    to: Contact,
    frame: Frame,
    attempts: u32,
}

pub struct CoordinatorNode {
    keypair: Keypair,
    config: CoordinatorConfig,
    dht_seeds: Vec<Contact>,
    pub dht: DhtEndpoint,
    ids: RequestIds,

    // The registry and the current directory survive restarts: the live
    // driver journals them, and the simulator leaves them in place across a
    // crash. Everything below them is in-memory and dies with the process.
    mixers: BTreeMap<NodeId, Contact>,
    info_nodes: BTreeMap<NodeId, Contact>,
    key_service: Option<Contact>,
    mailbox: Option<Contact>,
    round: u64,
    directory: Option<SignedDirectory>,

    phase: Phase,
    close_at: Option<(u64, u64)>,
    report_deadline: Option<(u64, u64)>,
    rotation_deadline: Option<(u64, u64)>,
    reports: BTreeMap<NodeId, RoundReport>,
    rotation: Option<Rotation>,
    handoff_grace: Option<u64>,
    pending: HashMap<u64, PendingSend>,
}

impl CoordinatorNode {
    pub fn new(keypair: Keypair, config: CoordinatorConfig, dht_seeds: Vec<Contact>) -> Self {
        let self_contact = Contact {
            id: keypair.node_id(),
            // placeholder until Started hands us the bound address
            addr: zephyr_core::envelope::NetAddr::new("0.0.0.0", 0).unwrap(),
        };
        let dht = DhtEndpoint::new(self_contact, &dht_seeds);
        CoordinatorNode {
            keypair,
            config,
            dht_seeds,
            dht,
            ids: RequestIds::starting_at(COORD_IDS),
            mixers: BTreeMap::new(),
            info_nodes: BTreeMap::new(),
            key_service: None,
            mailbox: None,
            round: 0,
            directory: None,
            phase: Phase::Idle,
            close_at: None,
            report_deadline: None,
            rotation_deadline: None,
            reports: BTreeMap::new(),
            rotation: None,
            handoff_grace: None,
            pending: HashMap::new(),
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

    pub fn directory(&self) -> Option<&SignedDirectory> {
        self.directory.as_ref()
    }

    pub fn verifying_key(&self) -> zephyr_core::sign::VerifyingKey {
        self.keypair.public.clone()
    }

    fn roster_complete(&self) -> bool {
        self.mixers.len() >= self.config.mixers
            && self.info_nodes.len() >= self.config.info_nodes
            && self.key_service.is_some()
            && self.mailbox.is_some()
    }

    fn directory_mixers(&self) -> Vec<Contact> {
        self.directory
            .as_ref()
            .map(|d| d.directory.mixers.clone())
            .unwrap_or_default()
    }

    // ---- registration ----------------------------------------------------------

    fn on_register(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = Register::from_frame(frame) else {
            return;
        };
        let id = msg.contact.id;
        let accepted = match msg.role {
            Role::Mixer => {
                self.mixers.insert(id, msg.contact);
                true
            }
            Role::InfoNode => {
                self.info_nodes.insert(id, msg.contact);
                true
            }
            // singleton roles: a second distinct node is refused, a restart
            // of the same node updates the address
            Role::KeyService => match &self.key_service {
                Some(c) if c.id != id => false,
                _ => {
                    self.key_service = Some(msg.contact);
                    true
                }
            },
            Role::Mailbox => match &self.mailbox {
                Some(c) if c.id != id => false,
                _ => {
                    self.mailbox = Some(msg.contact);
                    true
                }
            },
        };
        ctx.reply(from, RegisterOk { accepted }.into_frame(frame.request_id));
        if accepted && self.phase == Phase::Idle && self.roster_complete() {
            // everything is keyed per round, so round 1 needs a rotation too
            self.start_rotation(1, ctx);
        }
    }

    // ---- rotation --------------------------------------------------------------

    fn start_rotation(&mut self, next_round: u64, ctx: &mut dyn Context) {
        self.phase = Phase::Rotating;
        if self
            .rotation
            .as_ref()
            .map(|r| r.next_round != next_round)
            .unwrap_or(true)
        {
            self.rotation = Some(Rotation {
                next_round,
                confirmed: BTreeSet::new(),
                key_service: false,
            });
        }
        ctx.probe(Probe::RotationStarted { next_round });
        self.trigger_unconfirmed(ctx);
        self.arm_rotation_deadline(next_round, ctx);
        self.open_if_rotated(ctx);
    }

    /// (Re-)sends TriggerRotation to every target that has not confirmed.
    /// Safe to repeat: nodes treat a re-trigger for their current round as a
    /// lost ack and answer without re-keying.
    fn trigger_unconfirmed(&mut self, ctx: &mut dyn Context) {
        let Some(rot) = &self.rotation else {
            return;
        };
        let next_round = rot.next_round;
        let mut targets: Vec<Contact> = self
            .mixers
            .values()
            .filter(|c| !rot.confirmed.contains(&c.id))
            .cloned()
            .collect();
        if !rot.key_service {
            targets.extend(self.key_service.clone());
        }
        for to in targets {
            let rid = self.ids.allocate();
            ctx.send(&to.addr, TriggerRotation { next_round }.into_frame(rid));
        }
    }

    fn arm_rotation_deadline(&mut self, next_round: u64, ctx: &mut dyn Context) {
        let at = ctx.now() + ROTATION_TIMEOUT_MS;
        self.rotation_deadline = Some((next_round, at));
        ctx.set_timer(ROTATION_TIMEOUT_MS, ROTATION_TIMEOUT_TOKEN);
    }

    fn on_rotated(&mut self, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = Rotated::from_frame(frame) else {
            return;
        };
        let Some(rot) = &mut self.rotation else {
            return;
        };
        if msg.next_round != rot.next_round {
            return;
        }
        if self.key_service.as_ref().is_some_and(|c| c.id == msg.node) {
            rot.key_service = true;
        } else if self.mixers.contains_key(&msg.node) {
            rot.confirmed.insert(msg.node);
        }
        self.open_if_rotated(ctx);
    }

    /// Fast path: the moment every registered mixer and the key service have
    /// confirmed, the next round opens. The timeout path opens earlier with
    /// whoever made it.
    fn open_if_rotated(&mut self, ctx: &mut dyn Context) {
        if self.phase != Phase::Rotating {
            return;
        }
        let ready = self.rotation.as_ref().is_some_and(|r| {
            r.key_service && self.mixers.keys().all(|id| r.confirmed.contains(id))
        });
        if ready {
            self.open_round(ctx);
        }
    }

    fn on_rotation_timeout(&mut self, ctx: &mut dyn Context) {
        let due = self
            .rotation_deadline
            .is_some_and(|(_, at)| ctx.now() >= at);
        if !due || self.phase != Phase::Rotating {
            return;
        }
        let Some(rot) = &self.rotation else {
            return;
        };
        let next_round = rot.next_round;
        if !rot.key_service || rot.confirmed.is_empty() {
            // without fresh master params or at least one keyed mixer there
            // is no round to open; keep asking
            log::warn!("rotation for round {next_round} stalled, re-triggering");
            self.trigger_unconfirmed(ctx);
            self.arm_rotation_deadline(next_round, ctx);
            return;
        }
        let laggards: Vec<NodeId> = self
            .mixers
            .keys()
            .filter(|id| !rot.confirmed.contains(id))
            .copied()
            .collect();
        for id in &laggards {
            log::warn!("mixer {id} missed rotation for round {next_round}, excluded");
        }
        self.open_round(ctx);
    }

    // ---- round open ------------------------------------------------------------

    fn open_round(&mut self, ctx: &mut dyn Context) {
        let Some(rot) = self.rotation.take() else {
            return;
        };
        let next_round = rot.next_round;
        let (Some(key_service), Some(mailbox)) = (self.key_service.clone(), self.mailbox.clone())
        else {
            return;
        };
        // BTreeMap iteration gives the canonical ascending order the
        // signature covers
        let members: Vec<Contact> = self
            .mixers
            .iter()
            .filter(|(id, _)| rot.confirmed.contains(id))
            .map(|(_, c)| c.clone())
            .collect();
        let mut mailbox_salt = [0u8; 32];
        ctx.rng().fill_bytes(&mut mailbox_salt);
        let directory = RoundDirectory {
            round: next_round,
            coordinator: Contact {
                id: self.keypair.node_id(),
                addr: ctx.self_addr().clone(),
            },
            mixers: members,
            info_nodes: self.info_nodes.values().cloned().collect(),
            key_service,
            mailbox,
            mailbox_count: self.config.mailbox_count,
            mailbox_salt,
            open_time_ms: ctx.now(),
            round_duration_ms: self.config.round_duration_ms,
            max_route_len: self.config.max_route_len,
        };
        let signed = SignedDirectory::sign(directory, &self.keypair);
        self.round = next_round;
        self.directory = Some(signed.clone());
        self.phase = Phase::Open;
        self.reports.clear();
        self.rotation_deadline = None;

        // previous-round readers still need the old record for one more
        // round, hence the generous ttl
        self.dht.put(
            DhtKey::round_directory(next_round),
            signed.encode(),
            self.config.round_duration_ms.saturating_mul(4),
            ctx,
        );

        let mut recipients: Vec<Contact> = signed.directory.mixers.clone();
        recipients.extend(signed.directory.info_nodes.iter().cloned());
        recipients.push(signed.directory.key_service.clone());
        recipients.push(signed.directory.mailbox.clone());
        for to in recipients {
            self.send_with_retry(
                to,
                OpenRound {
                    directory: signed.clone(),
                },
                ctx,
            );
        }

        let duration = self.config.round_duration_ms;
        self.close_at = Some((next_round, ctx.now() + duration));
        ctx.set_timer(duration, CLOSE_TOKEN);
        ctx.probe(Probe::RoundOpened { round: next_round });
        self.drain_dht(ctx);
    }

    // ---- round close and reports -------------------------------------------------

    fn on_close_timer(&mut self, ctx: &mut dyn Context) {
        let due = self
            .close_at
            .is_some_and(|(r, at)| r == self.round && ctx.now() >= at);
        if due && self.phase == Phase::Open {
            self.close_round(ctx);
        }
    }

    fn close_round(&mut self, ctx: &mut dyn Context) {
        self.phase = Phase::Mixing;
        self.close_at = None;
        let round = self.round;
        for to in self.directory_mixers() {
            self.send_with_retry(to, CloseRound { round }, ctx);
        }
        let at = ctx.now() + REPORT_TIMEOUT_MS;
        self.report_deadline = Some((round, at));
        ctx.set_timer(REPORT_TIMEOUT_MS, REPORT_TIMEOUT_TOKEN);
        ctx.probe(Probe::RoundClosed { round });
    }

    fn on_report(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = ReportDone::from_frame(frame) else {
            return;
        };
        // always acked, or the mixer retries forever
        ctx.reply(from, ReportOk {}.into_frame(frame.request_id));
        let report = msg.report;
        if report.round != self.round {
            return;
        }
        if !report.conserved() {
            log::warn!(
                "mixer {} filed a non-conserved report for round {}",
                report.mixer,
                report.round
            );
        }
        let in_directory = self
            .directory
            .as_ref()
            .is_some_and(|d| d.directory.mixer_ids().any(|id| id == report.mixer));
        if in_directory {
            self.reports.insert(report.mixer, report);
            self.finish_if_reported(ctx);
        }
    }

    fn finish_if_reported(&mut self, ctx: &mut dyn Context) {
        if self.phase != Phase::Mixing {
            return;
        }
        let all = self
            .directory
            .as_ref()
            .is_some_and(|d| d.directory.mixer_ids().all(|id| self.reports.contains_key(&id)));
        if all {
            self.finish_round(ctx);
        }
    }

    fn finish_round(&mut self, ctx: &mut dyn Context) {
        self.phase = Phase::Closing;
        self.report_deadline = None;
        ctx.probe(Probe::RoundComplete { round: self.round });
        self.start_rotation(self.round + 1, ctx);
    }

    fn on_report_timeout(&mut self, ctx: &mut dyn Context) {
        let due = self
            .report_deadline
            .is_some_and(|(r, at)| r == self.round && ctx.now() >= at);
        if !due || self.phase != Phase::Mixing {
            return;
        }
        for id in self
            .directory
            .as_ref()
            .map(|d| d.directory.mixer_ids().collect::<Vec<_>>())
            .unwrap_or_default()
        {
            if !self.reports.contains_key(&id) {
                log::warn!("mixer {id} never reported for round {}", self.round);
            }
        }
        self.finish_round(ctx);
    }

    // ---- failover and recovery ---------------------------------------------------

    fn on_handoff(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        let Ok(msg) = Handoff::from_frame(frame) else {
            return;
        };
        // a stale handoff still gets a yes so the substitute stands down
        ctx.reply(from, HandoffOk { accepted: true }.into_frame(frame.request_id));
        if msg.completed_round < self.round {
            return;
        }
        ctx.probe(Probe::HandoffAccepted {
            round: msg.completed_round,
        });
        self.handoff_grace = None;
        self.round = msg.completed_round;
        self.reports = msg.reports.into_iter().map(|r| (r.mixer, r)).collect();
        let mut confirmed: BTreeSet<NodeId> = msg.rotated.into_iter().collect();
        confirmed.retain(|id| self.mixers.contains_key(id));
        self.rotation = Some(Rotation {
            next_round: msg.completed_round + 1,
            confirmed,
            key_service: msg.key_service_rotated,
        });
        // the substitute already announced this rotation; we only chase the
        // stragglers whose acks died with it
        self.phase = Phase::Rotating;
        self.trigger_unconfirmed(ctx);
        self.arm_rotation_deadline(msg.completed_round + 1, ctx);
        self.open_if_rotated(ctx);
    }

    fn on_recovered(&mut self, ctx: &mut dyn Context) {
        // registry, round counter and directory persist; round state dies
        // with the process
        self.reports.clear();
        self.rotation = None;
        self.close_at = None;
        self.report_deadline = None;
        self.rotation_deadline = None;
        self.pending.clear();
        self.ids = RequestIds::starting_at(COORD_IDS);
        let self_contact = Contact {
            id: self.keypair.node_id(),
            addr: ctx.self_addr().clone(),
        };
        self.dht = DhtEndpoint::new(self_contact, &self.dht_seeds);
        self.dht.bootstrap(ctx);
        self.phase = Phase::Recovering;
        self.handoff_grace = Some(ctx.now() + HANDOFF_GRACE_MS);
        ctx.set_timer(HANDOFF_GRACE_MS, HANDOFF_GRACE_TOKEN);
        self.drain_dht(ctx);
    }

    /// No substitute claimed the round within the grace period, so nothing
    /// finished it: pick the round up where the directory says it stood.
    fn resume_after_grace(&mut self, ctx: &mut dyn Context) {
        let due = self.handoff_grace.is_some_and(|at| ctx.now() >= at);
        if !due || self.phase != Phase::Recovering {
            return;
        }
        self.handoff_grace = None;
        if self.round == 0 {
            if self.roster_complete() {
                self.start_rotation(1, ctx);
            } else {
                self.phase = Phase::Idle;
            }
            return;
        }
        let Some(dir) = self.directory.as_ref().map(|d| d.directory.clone()) else {
            self.phase = Phase::Idle;
            return;
        };
        let close_time = dir.open_time_ms + dir.round_duration_ms;
        if ctx.now() < close_time {
            self.phase = Phase::Open;
            let wait = close_time - ctx.now();
            self.close_at = Some((self.round, close_time));
            ctx.set_timer(wait, CLOSE_TOKEN);
        } else {
            // the collection window lapsed while we were down; close now.
            // mixers that already closed just re-ack, and any report whose
            // ReportOk we never sent is still on their retry ladder
            self.close_round(ctx);
            self.finish_if_reported(ctx);
        }
    }

    // ---- plumbing --------------------------------------------------------------

    fn send_with_retry<M: WireMsg + Clone>(&mut self, to: Contact, msg: M, ctx: &mut dyn Context) {
        let rid = self.ids.allocate();
        let frame = msg.into_frame(rid);
        ctx.send(&to.addr, frame.clone());
        ctx.set_timer(SEND_RETRY_MS, rid);
        self.pending.insert(
            rid,
            PendingSend {
                to,
                frame,
                attempts: 1,
            },
        );
    }

    fn on_send_retry(&mut self, rid: u64, ctx: &mut dyn Context) {
        let Some(p) = self.pending.remove(&rid) else {
            return;
        };
        if p.attempts >= SEND_RETRIES {
            log::warn!("{:?} to {} went unanswered, giving up", p.frame.opcode, p.to.id);
            return;
        }
        let new_rid = self.ids.allocate();
        let mut frame = p.frame;
        frame.request_id = new_rid;
        ctx.send(&p.to.addr, frame.clone());
        ctx.set_timer(SEND_RETRY_MS, new_rid);
        self.pending.insert(
            new_rid,
            PendingSend {
                to: p.to,
                frame,
                attempts: p.attempts + 1,
            },
        );
    }

    fn drain_dht(&mut self, ctx: &mut dyn Context) {
        // puts resolve on their own; the coordinator never reads back
        self.dht.take_completed();
        let _ = ctx;
    }

    fn on_frame(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        if self.dht.handle_frame(from, frame, ctx) {
            self.drain_dht(ctx);
            return;
        }
        match frame.opcode {
            Opcode::Register => self.on_register(from, frame, ctx),
            Opcode::Heartbeat => {
                if Heartbeat::from_frame(frame).is_ok() {
                    ctx.reply(
                        from,
                        HeartbeatOk { round: self.round }.into_frame(frame.request_id),
                    );
                }
            }
            Opcode::ReportDone => self.on_report(from, frame, ctx),
            Opcode::Rotated => self.on_rotated(frame, ctx),
            Opcode::Handoff => self.on_handoff(from, frame, ctx),
            Opcode::OpenRoundOk | Opcode::CloseRoundOk => {
                self.pending.remove(&frame.request_id);
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
            CLOSE_TOKEN => self.on_close_timer(ctx),
            REPORT_TIMEOUT_TOKEN => self.on_report_timeout(ctx),
            ROTATION_TIMEOUT_TOKEN => self.on_rotation_timeout(ctx),
            HANDOFF_GRACE_TOKEN => self.resume_after_grace(ctx),
            rid => self.on_send_retry(rid, ctx),
        }
    }
}

impl NodeLogic for CoordinatorNode {
    fn handle(&mut self, event: Event, ctx: &mut dyn Context) {
        match event {
            Event::Started => {
                let self_contact = Contact {
                    id: self.keypair.node_id(),
                    addr: ctx.self_addr().clone(),
                };
                self.dht = DhtEndpoint::new(self_contact, &self.dht_seeds);
                self.dht.bootstrap(ctx);
                self.drain_dht(ctx);
            }
            Event::Recovered => self.on_recovered(ctx),
            Event::Frame { from, frame } => self.on_frame(&from, &frame, ctx),
            Event::Timer { token } => self.on_timer(token, ctx),
            Event::Email { .. } => {}
        }
    }

    fn footprint(&self) -> u64 {
        self.dht.footprint() + (self.reports.len() as u64) * 64
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
