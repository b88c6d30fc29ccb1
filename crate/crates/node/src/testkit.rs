//! A recording [`Context`] for driving node logic by hand in tests, plus a
//! deterministic in-memory [`Cluster`] for wiring several nodes together.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use zephyr_core::envelope::NetAddr;
use zephyr_core::proto::{Frame, WireMsg};

use crate::runtime::{Context, Event, NodeLogic, Peer, Probe, TimerToken};

pub struct TestContext {
    pub now: u64,
    pub self_addr: NetAddr,
    pub sent: Vec<(NetAddr, Frame)>,
    pub replies: Vec<(Peer, Frame)>,
    /// (absolute deadline, token)
    pub timers: Vec<(u64, TimerToken)>,
    pub emails: Vec<(String, String)>,
    pub probes: Vec<Probe>,
    pub rng: ChaCha20Rng,
}

impl TestContext {
    pub fn new(host: &str, port: u16) -> Self {
        TestContext {
            now: 0,
            self_addr: NetAddr::new(host, port).unwrap(),
            sent: Vec::new(),
            replies: Vec::new(),
            timers: Vec::new(),
            emails: Vec::new(),
            probes: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(0x7e57),
        }
    }

    /// Drains and returns everything sent so far.
    pub fn take_sent(&mut self) -> Vec<(NetAddr, Frame)> {
        std::mem::take(&mut self.sent)
    }

    pub fn take_replies(&mut self) -> Vec<(Peer, Frame)> {
        std::mem::take(&mut self.replies)
    }

    /// All sent frames decoding as `M`, with their destinations.
    pub fn sent_of<M: WireMsg>(&self) -> Vec<(NetAddr, M)> {
        self.sent
            .iter()
            .filter(|(_, f)| f.opcode == M::OPCODE)
            .map(|(to, f)| (to.clone(), M::from_frame(f).expect("decodes")))
            .collect()
    }

    /// All replies decoding as `M`.
    pub fn replies_of<M: WireMsg>(&self) -> Vec<M> {
        self.replies
            .iter()
            .filter(|(_, f)| f.opcode == M::OPCODE)
            .map(|(_, f)| M::from_frame(f).expect("decodes"))
            .collect()
    }
}

impl Context for TestContext {
    fn now(&self) -> u64 {
        self.now
    }

    fn self_addr(&self) -> &NetAddr {
        &self.self_addr
    }

    fn send(&mut self, to: &NetAddr, frame: Frame) {
        self.sent.push((to.clone(), frame));
    }

    fn reply(&mut self, to: &Peer, frame: Frame) {
        self.replies.push((to.clone(), frame));
    }

    fn set_timer(&mut self, delay_ms: u64, token: TimerToken) {
        self.timers.push((self.now + delay_ms, token));
    }

    fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    fn send_email(&mut self, to: &str, body: &str) {
        self.emails.push((to.to_string(), body.to_string()));
    }

    fn probe(&mut self, probe: Probe) {
        self.probes.push(probe);
    }
}

pub struct ClusterNode {
    pub logic: Box<dyn NodeLogic>,
    pub ctx: TestContext,
    pub down: bool,
}

/// An in-memory network: frames route by address in a fixed order, timers
/// fire in global deadline order, and virtual time advances only as far as
/// the caller asks. Everything is deterministic for a given seed and event
/// sequence.
pub struct Cluster {
    pub nodes: Vec<ClusterNode>,
    by_addr: HashMap<NetAddr, usize>,
    /// Frames addressed to nobody in the cluster: (from, to, frame).
    pub external: Vec<(NetAddr, NetAddr, Frame)>,
    pub clock: u64,
}

impl Default for Cluster {
    fn default() -> Self {
        Self::new()
    }
}

impl Cluster {
    pub fn new() -> Self {
        Cluster {
            nodes: Vec::new(),
            by_addr: HashMap::new(),
            external: Vec::new(),
            clock: 0,
        }
    }

    /// Registers a node at `host:port` with its own seeded rng. Does not
    /// deliver `Started`; call [`Cluster::start`] when wiring is done.
    pub fn add(&mut self, host: &str, port: u16, seed: u64, logic: Box<dyn NodeLogic>) -> usize {
        let mut ctx = TestContext::new(host, port);
        ctx.rng = ChaCha20Rng::seed_from_u64(seed);
        ctx.now = self.clock;
        let idx = self.nodes.len();
        self.by_addr.insert(ctx.self_addr.clone(), idx);
        self.nodes.push(ClusterNode {
            logic,
            ctx,
            down: false,
        });
        idx
    }

    pub fn addr(&self, i: usize) -> NetAddr {
        self.nodes[i].ctx.self_addr.clone()
    }

    pub fn start(&mut self, i: usize) {
        let node = &mut self.nodes[i];
        node.logic.handle(Event::Started, &mut node.ctx);
        self.pump();
    }

    /// Crash: the process dies, taking pending timers and queued output
    /// with it. Frames sent to it while down vanish.
    pub fn crash(&mut self, i: usize) {
        let node = &mut self.nodes[i];
        node.down = true;
        node.ctx.sent.clear();
        node.ctx.replies.clear();
        node.ctx.timers.clear();
    }

    pub fn recover(&mut self, i: usize) {
        let node = &mut self.nodes[i];
        node.down = false;
        node.ctx.now = self.clock;
        node.logic.handle(Event::Recovered, &mut node.ctx);
        self.pump();
    }

    /// Hands a frame to node `i` as if `from` had sent it, then routes
    /// whatever falls out.
    pub fn inject(&mut self, from: &NetAddr, i: usize, frame: Frame) {
        let node = &mut self.nodes[i];
        if node.down {
            return;
        }
        node.logic.handle(
            Event::Frame {
                from: Peer::at(from.clone()),
                frame,
            },
            &mut node.ctx,
        );
        self.pump();
    }

    pub fn email(&mut self, i: usize, to: &str, body: &str) {
        let node = &mut self.nodes[i];
        node.logic.handle(
            Event::Email {
                to: to.to_string(),
                body: body.to_string(),
            },
            &mut node.ctx,
        );
        self.pump();
    }

    /// Routes queued frames until the network is quiet. Time stands still.
    pub fn pump(&mut self) {
        loop {
            let mut moved = false;
            for i in 0..self.nodes.len() {
                if self.nodes[i].down {
                    continue;
                }
                let from_addr = self.nodes[i].ctx.self_addr.clone();
                let sent = self.nodes[i].ctx.take_sent();
                let replies = self.nodes[i].ctx.take_replies();
                let outbound = sent
                    .into_iter()
                    .chain(replies.into_iter().map(|(peer, f)| (peer.addr, f)));
                for (to, frame) in outbound {
                    moved = true;
                    match self.by_addr.get(&to) {
                        Some(&j) if !self.nodes[j].down => {
                            let node = &mut self.nodes[j];
                            node.logic.handle(
                                Event::Frame {
                                    from: Peer::at(from_addr.clone()),
                                    frame,
                                },
                                &mut node.ctx,
                            );
                        }
                        Some(_) => {} // down: the wire goes dark
                        None => self.external.push((from_addr.clone(), to, frame)),
                    }
                }
            }
            if !moved {
                return;
            }
        }
    }

    /// Advances virtual time to `until`, firing due timers in deadline
    /// order (ties break by node index) and routing frames after each.
    pub fn run_until(&mut self, until: u64) {
        self.pump();
        loop {
            let mut next: Option<(u64, usize, usize)> = None;
            for (i, node) in self.nodes.iter().enumerate() {
                if node.down {
                    continue;
                }
                for (slot, &(deadline, _)) in node.ctx.timers.iter().enumerate() {
                    if deadline > until {
                        continue;
                    }
                    if next.map_or(true, |(d, ni, _)| (deadline, i) < (d, ni)) {
                        next = Some((deadline, i, slot));
                    }
                }
            }
            let Some((deadline, i, slot)) = next else {
                break;
            };
            self.clock = self.clock.max(deadline);
            for node in &mut self.nodes {
                node.ctx.now = self.clock;
            }
            let (_, token) = self.nodes[i].ctx.timers.remove(slot);
            let node = &mut self.nodes[i];
            node.logic.handle(Event::Timer { token }, &mut node.ctx);
            self.pump();
        }
        self.clock = self.clock.max(until);
        for node in &mut self.nodes {
            if !node.down {
                node.ctx.now = self.clock;
            }
        }
        self.pump();
    }

    /// Frames sent to `to` that left the cluster, decoded as `M`.
    pub fn external_of<M: WireMsg>(&self, to: &NetAddr) -> Vec<(NetAddr, M)> {
        self.external
            .iter()
            .filter(|(_, t, f)| t == to && f.opcode == M::OPCODE)
            .map(|(from, _, f)| (from.clone(), M::from_frame(f).expect("decodes")))
            .collect()
    }

    pub fn probes(&self, i: usize) -> &[Probe] {
        &self.nodes[i].ctx.probes
    }
}
