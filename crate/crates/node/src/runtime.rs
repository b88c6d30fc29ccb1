//! The event-driven substrate node logic runs on.
//!
//! A node never blocks and never owns a socket: it reacts to one [`Event`]
//! at a time and issues effects through the [`Context`] it is handed. The
//! driver behind the context decides what "send a frame" or "arm a timer"
//! means (virtual transport in the simulator, TCP in the live binary).
//! Determinism in the simulator follows from this split plus the per-node
//! seeded rng.

use rand_chacha::ChaCha20Rng;

use zephyr_core::envelope::NetAddr;
use zephyr_core::ids::NodeId;
use zephyr_core::proto::Frame;

pub type TimerToken = u64;

/// Where a frame came from. `conn` identifies the inbound connection when
/// the driver has one (TCP); replies prefer it over dialing `addr`, which
/// for a client peer is not dialable at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Peer {
    pub addr: NetAddr,
    pub conn: Option<u64>,
}

impl Peer {
    pub fn at(addr: NetAddr) -> Peer {
        Peer { addr, conn: None }
    }
}

#[derive(Debug, Clone)]
pub enum Event {
    /// First event a node ever sees; registration and bootstrap go here.
    Started,
    Frame {
        from: Peer,
        frame: Frame,
    },
    Timer {
        token: TimerToken,
    },
    /// A verification email reaching this node's inbox (clients only).
    Email {
        to: String,
        body: String,
    },
    /// Process restarted after a crash: persistent state survived, volatile
    /// round state did not. The logic clears what it would have lost.
    Recovered,
}

/// Effects a node can request. Implemented by each driver.
pub trait Context {
    /// Milliseconds since the deployment epoch.
    fn now(&self) -> u64;
    /// The address peers can dial this node at.
    fn self_addr(&self) -> &NetAddr;
    fn send(&mut self, to: &NetAddr, frame: Frame);
    fn reply(&mut self, to: &Peer, frame: Frame);
    /// Arms a one-shot timer: Event::Timer { token } fires after `delay_ms`.
    /// Tokens are the node's own bookkeeping; stale ones are ignored by the
    /// handler, there is no cancel.
    fn set_timer(&mut self, delay_ms: u64, token: TimerToken);
    fn rng(&mut self) -> &mut ChaCha20Rng;
    /// Dispatches a verification email (key service only).
    fn send_email(&mut self, to: &str, body: &str);
    /// Emits an observable checkpoint for tests and scenario assertions.
    /// Free to be a no-op in production drivers.
    fn probe(&mut self, probe: Probe);
}

pub trait NodeLogic: std::any::Any {
    fn handle(&mut self, event: Event, ctx: &mut dyn Context);

    /// Rough bytes of state retained right now, for capacity metrics.
    fn footprint(&self) -> u64 {
        0
    }

    /// Escape hatch for tests and drivers that need the concrete node back.
    fn as_any(&self) -> &dyn std::any::Any;
}

/// Checkpoints emitted through [`Context::probe`]. The simulator records
/// them with virtual timestamps; scenario tests assert on their order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Probe {
    BarrierSignaled { round: u64, mixer: NodeId },
    BarrierSatisfied { round: u64, mixer: NodeId, mixers: usize },
    BarrierTimedOut { round: u64, mixer: NodeId },
    WaveProcessed {
        round: u64,
        mixer: NodeId,
        wave: u8,
        input: usize,
        forwarded: usize,
        uploaded: usize,
        dropped: usize,
    },
    MixerDone { round: u64, mixer: NodeId },
    RoundOpened { round: u64 },
    RoundClosed { round: u64 },
    RotationStarted { next_round: u64 },
    RoundComplete { round: u64 },
    TakeoverAnnounced { round: u64, acting: NodeId },
    HandoffAccepted { round: u64 },
    ClientEnrolled { round: u64 },
    ClientSent { round: u64 },
    ClientDelivered { round: u64, message: Vec<u8> },
}

/// Monotone request-id source. Ids only need to be unique per node; drivers
/// route responses by id, so two in-flight requests must never share one.
#[derive(Default, Debug)]
pub struct RequestIds {
    next: u64,
}

impl RequestIds {
    /// Starts allocation at `base`, letting subsystems within one node carve
    /// out disjoint id ranges.
    pub fn starting_at(base: u64) -> Self {
        RequestIds { next: base }
    }

    pub fn allocate(&mut self) -> u64 {
        self.next += 1;
        self.next
    }
}
