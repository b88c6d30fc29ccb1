//! Info node behavior: publication gating, bundle completeness, DHT
//! replication between info nodes, and healing fetches over the overlay.

use std::collections::HashSet;

use zephyr_core::envelope::{MixerPublicKey, NetAddr};
use zephyr_core::ids::NodeId;
use zephyr_core::proto::{
    Contact, FetchBundle, FetchBundleOk, Frame, MixerKeyRecord, OpenRound, OpenRoundOk,
    ParamsBundle, PublishKey, PublishKeyOk, PublishParams, Register, RegisterOk, Role,
    RoundDirectory, SignedDirectory, WireMsg, BUNDLE_STATUS_INCOMPLETE, BUNDLE_STATUS_OK,
    BUNDLE_STATUS_UNKNOWN_ROUND, ROUND_LATEST,
};
use zephyr_core::sign::Keypair;
use zephyr_node::info::InfoNode;
use zephyr_node::runtime::{Event, NodeLogic, Peer};
use zephyr_node::testkit::TestContext;

fn coordinator() -> Keypair {
    Keypair::from_seed([0xc0; 32])
}

fn record(tag: u8, round: u64, ts: u64, key_byte: u8) -> MixerKeyRecord {
    MixerKeyRecord {
        mixer_id: NodeId([tag; 20]),
        round,
        public_key: MixerPublicKey([key_byte; 32]),
        address: NetAddr::new("mixer", 7000 + tag as u16).unwrap(),
        published_at_ms: ts,
    }
}

fn params(round: u64) -> ParamsBundle {
    ParamsBundle {
        round,
        mpk: vec![0xab; 96],
    }
}

/// Directory whose mixer ids ascend, as the coordinator guarantees.
fn directory(round: u64, mixer_tags: &[u8]) -> RoundDirectory {
    let c = |tag: u8, port: u16| Contact {
        id: NodeId([tag; 20]),
        addr: NetAddr::new("n", port).unwrap(),
    };
    RoundDirectory {
        round,
        coordinator: c(0xc0, 6000),
        mixers: mixer_tags
            .iter()
            .map(|&t| Contact {
                id: NodeId([t; 20]),
                addr: NetAddr::new("mixer", 7000 + t as u16).unwrap(),
            })
            .collect(),
        info_nodes: vec![c(0xa0, 8001), c(0xa1, 8002), c(0xa2, 8003)],
        key_service: c(0x0b, 8500),
        mailbox: c(0x4b, 9000),
        mailbox_count: 16,
        mailbox_salt: [9; 32],
        open_time_ms: 0,
        round_duration_ms: 10_000,
        max_route_len: 5,
    }
}

// ---- single node ---------------------------------------------------------------

struct Rig {
    node: InfoNode,
    ctx: TestContext,
    next_rid: u64,
}

impl Rig {
    fn new() -> Rig {
        let node = InfoNode::new(
            Keypair::from_seed([0xa0; 32]),
            NetAddr::new("coord", 6000).unwrap(),
            coordinator().public.clone(),
            NetAddr::new("info-a", 8001).unwrap(),
            &[],
        );
        let mut rig = Rig {
            node,
            ctx: TestContext::new("info-a", 8001),
            next_rid: 100,
        };
        rig.node.handle(Event::Started, &mut rig.ctx);
        rig.ctx.take_sent();
        rig
    }

    fn deliver<M: WireMsg>(&mut self, msg: M) -> u64 {
        self.next_rid += 1;
        let rid = self.next_rid;
        self.node.handle(
            Event::Frame {
                from: Peer::at(NetAddr::new("peer", 1).unwrap()),
                frame: msg.into_frame(rid),
            },
            &mut self.ctx,
        );
        rid
    }

    fn open(&mut self, round: u64, mixer_tags: &[u8]) {
        let signed = SignedDirectory::sign(directory(round, mixer_tags), &coordinator());
        self.deliver(OpenRound { directory: signed });
        self.ctx.take_replies();
        self.ctx.take_sent();
    }

    fn last_reply<M: WireMsg>(&mut self) -> M {
        let (_, frame) = self.ctx.take_replies().pop().expect("a reply");
        M::from_frame(&frame).expect("expected reply type")
    }

    fn fetch(&mut self, round: u64) -> FetchBundleOk {
        self.deliver(FetchBundle { round });
        self.last_reply()
    }
}

#[test]
fn registers_as_info_node_on_start() {
    let node = InfoNode::new(
        Keypair::from_seed([0xa0; 32]),
        NetAddr::new("coord", 6000).unwrap(),
        coordinator().public.clone(),
        NetAddr::new("info-a", 8001).unwrap(),
        &[],
    );
    let mut ctx = TestContext::new("info-a", 8001);
    let mut node = node;
    node.handle(Event::Started, &mut ctx);
    let regs = ctx.sent_of::<Register>();
    assert_eq!(regs.len(), 1);
    assert_eq!(regs[0].1.role, Role::InfoNode);
}

#[test]
fn publish_then_fetch_returns_a_valid_bundle() {
    let mut rig = Rig::new();
    rig.open(1, &[1, 2]);
    rig.deliver(PublishKey {
        record: record(2, 1, 10, 0x22),
    });
    rig.deliver(PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    rig.deliver(PublishParams { params: params(1) });
    rig.ctx.take_replies();

    let rsp = rig.fetch(1);
    assert_eq!(rsp.status, BUNDLE_STATUS_OK);
    let bundle = rsp.bundle.expect("bundle present");
    assert!(bundle.validate(&coordinator().public).is_ok());
    // canonical order: ascending mixer id regardless of publish order
    assert_eq!(bundle.records[0].mixer_id, NodeId([1; 20]));
    assert_eq!(bundle.records[1].mixer_id, NodeId([2; 20]));
    assert_eq!(bundle.params, params(1));
}

#[test]
fn unknown_round_before_any_directory() {
    let mut rig = Rig::new();
    let rsp = rig.fetch(ROUND_LATEST);
    assert_eq!(rsp.status, BUNDLE_STATUS_UNKNOWN_ROUND);
    let rsp = rig.fetch(7);
    assert_eq!(rsp.status, BUNDLE_STATUS_UNKNOWN_ROUND);
}

#[test]
fn incomplete_bundle_names_the_missing_mixer() {
    let mut rig = Rig::new();
    rig.open(1, &[1, 2]);
    rig.deliver(PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    rig.deliver(PublishParams { params: params(1) });
    rig.ctx.take_replies();

    // no peers to ask, so the gap lookup settles immediately
    let rsp = rig.fetch(1);
    assert_eq!(rsp.status, BUNDLE_STATUS_INCOMPLETE);
    assert!(rsp.bundle.is_none());
    assert_eq!(rsp.missing, vec![NodeId([2; 20])]);
}

#[test]
fn missing_params_block_the_bundle() {
    let mut rig = Rig::new();
    rig.open(1, &[1]);
    rig.deliver(PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    rig.ctx.take_replies();
    let rsp = rig.fetch(1);
    assert_eq!(rsp.status, BUNDLE_STATUS_INCOMPLETE);
    assert!(rsp.missing.is_empty(), "no mixer is missing, params are");
}

#[test]
fn republish_replaces_and_newest_wins_either_arrival_order() {
    let mut rig = Rig::new();
    rig.open(1, &[1]);
    rig.deliver(PublishParams { params: params(1) });
    rig.deliver(PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    rig.deliver(PublishKey {
        record: record(1, 1, 20, 0x22),
    });
    rig.ctx.take_replies();
    let rsp = rig.fetch(1);
    let bundle = rsp.bundle.expect("complete");
    assert_eq!(bundle.records.len(), 1);
    assert_eq!(bundle.records[0].public_key.0, [0x22; 32]);

    // same data arriving newest-first must converge to the same winner
    let mut rig = Rig::new();
    rig.open(1, &[1]);
    rig.deliver(PublishParams { params: params(1) });
    rig.deliver(PublishKey {
        record: record(1, 1, 20, 0x22),
    });
    rig.deliver(PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    rig.ctx.take_replies();
    let rsp = rig.fetch(1);
    assert_eq!(
        rsp.bundle.expect("complete").records[0].public_key.0,
        [0x22; 32]
    );
}

#[test]
fn stale_round_publications_rejected_future_accepted() {
    let mut rig = Rig::new();
    rig.open(2, &[1]);
    rig.deliver(PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    let rsp: PublishKeyOk = rig.last_reply();
    assert!(!rsp.accepted, "round 1 is behind the current round 2");

    rig.deliver(PublishKey {
        record: record(1, 2, 10, 0x11),
    });
    let rsp: PublishKeyOk = rig.last_reply();
    assert!(rsp.accepted);

    // next-round keys arrive before the next directory opens
    rig.deliver(PublishKey {
        record: record(1, 3, 10, 0x11),
    });
    let rsp: PublishKeyOk = rig.last_reply();
    assert!(rsp.accepted);
}

#[test]
fn round_latest_resolves_to_the_open_round() {
    let mut rig = Rig::new();
    rig.open(3, &[1]);
    rig.deliver(PublishKey {
        record: record(1, 3, 10, 0x11),
    });
    rig.deliver(PublishParams { params: params(3) });
    rig.ctx.take_replies();
    let rsp = rig.fetch(ROUND_LATEST);
    assert_eq!(rsp.status, BUNDLE_STATUS_OK);
    assert_eq!(rsp.bundle.unwrap().round, 3);
}

#[test]
fn retains_current_and_previous_rounds_only() {
    let mut rig = Rig::new();
    for round in 1..=2u64 {
        rig.open(round, &[1]);
        rig.deliver(PublishKey {
            record: record(1, round, 10, 0x11),
        });
        rig.deliver(PublishParams {
            params: params(round),
        });
        rig.ctx.take_replies();
    }
    assert_eq!(rig.fetch(1).status, BUNDLE_STATUS_OK, "previous round served");

    rig.open(3, &[1]);
    assert_eq!(rig.fetch(1).status, BUNDLE_STATUS_UNKNOWN_ROUND, "pruned");
    assert_eq!(rig.fetch(2).status, BUNDLE_STATUS_OK, "still previous");
}

#[test]
fn forged_directory_ignored() {
    let mut rig = Rig::new();
    let forged = SignedDirectory::sign(directory(2, &[1]), &Keypair::from_seed([0xbd; 32]));
    rig.deliver(OpenRound { directory: forged });
    assert!(rig.ctx.replies_of::<OpenRoundOk>().is_empty());
    assert_eq!(rig.node.current_round(), None);
}

#[test]
fn stale_directory_does_not_roll_back() {
    let mut rig = Rig::new();
    rig.open(5, &[1]);
    let old = SignedDirectory::sign(directory(4, &[1]), &coordinator());
    rig.deliver(OpenRound { directory: old });
    assert!(rig.ctx.replies_of::<OpenRoundOk>().is_empty());
    assert_eq!(rig.node.current_round(), Some(5));
}

// ---- three-node network ---------------------------------------------------------

struct Net {
    nodes: Vec<(Contact, InfoNode, TestContext)>,
    dead: HashSet<usize>,
    client_rsp: Vec<Frame>,
    next_rid: u64,
}

const CLIENT: &str = "client";

impl Net {
    fn new(n: usize) -> Net {
        let keys: Vec<Keypair> = (0..n).map(|i| Keypair::from_seed([0xa0 + i as u8; 32])).collect();
        let contacts: Vec<Contact> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| Contact {
                id: k.node_id(),
                addr: NetAddr::new(&format!("info-{i}"), 8001 + i as u16).unwrap(),
            })
            .collect();
        let mut nodes = Vec::new();
        for (i, key) in keys.into_iter().enumerate() {
            let seeds: Vec<Contact> = contacts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c.clone())
                .collect();
            let node = InfoNode::new(
                key,
                NetAddr::new("coord", 6000).unwrap(),
                coordinator().public.clone(),
                contacts[i].addr.clone(),
                &seeds,
            );
            let ctx = TestContext::new(contacts[i].addr.host(), contacts[i].addr.port);
            nodes.push((contacts[i].clone(), node, ctx));
        }
        let mut net = Net {
            nodes,
            dead: HashSet::new(),
            client_rsp: Vec::new(),
            next_rid: 1000,
        };
        for i in 0..n {
            let (_, node, ctx) = &mut net.nodes[i];
            node.handle(Event::Started, ctx);
            // ack registration so the retry timer goes quiet
            let rid = net.next_rid;
            let coord = NetAddr::new("coord", 6000).unwrap();
            net.deliver_to(i, coord, RegisterOk { accepted: true }.into_frame(rid));
        }
        net.settle();
        net
    }

    fn deliver_to(&mut self, i: usize, from: NetAddr, frame: Frame) {
        let (_, node, ctx) = &mut self.nodes[i];
        node.handle(
            Event::Frame {
                from: Peer::at(from),
                frame,
            },
            ctx,
        );
    }

    fn send<M: WireMsg>(&mut self, i: usize, msg: M) -> u64 {
        self.next_rid += 1;
        let rid = self.next_rid;
        self.deliver_to(i, NetAddr::new(CLIENT, 1).unwrap(), msg.into_frame(rid));
        rid
    }

    fn index_of(&self, addr: &NetAddr) -> Option<usize> {
        self.nodes.iter().position(|(c, _, _)| c.addr == *addr)
    }

    fn pump(&mut self) {
        loop {
            let mut in_flight = Vec::new();
            for i in 0..self.nodes.len() {
                let from = self.nodes[i].0.addr.clone();
                let alive = !self.dead.contains(&i);
                let (_, _, ctx) = &mut self.nodes[i];
                for (to, frame) in ctx.take_sent() {
                    if alive {
                        in_flight.push((from.clone(), to, frame));
                    }
                }
                for (peer, frame) in ctx.take_replies() {
                    if alive {
                        in_flight.push((from.clone(), peer.addr, frame));
                    }
                }
            }
            if in_flight.is_empty() {
                return;
            }
            for (from, to, frame) in in_flight {
                if to.host() == CLIENT {
                    self.client_rsp.push(frame);
                    continue;
                }
                match self.index_of(&to) {
                    Some(j) if !self.dead.contains(&j) => {
                        self.deliver_to(j, from, frame);
                    }
                    _ => {}
                }
            }
        }
    }

    fn settle(&mut self) {
        loop {
            self.pump();
            let next = self
                .nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| !self.dead.contains(i))
                .flat_map(|(i, (_, _, ctx))| ctx.timers.iter().map(move |&(at, tok)| (at, i, tok)))
                .min();
            let Some((at, i, token)) = next else {
                return;
            };
            let (_, node, ctx) = &mut self.nodes[i];
            ctx.timers.retain(|&(a, t)| (a, t) != (at, token));
            ctx.now = ctx.now.max(at);
            node.handle(Event::Timer { token }, ctx);
        }
    }

    fn open_all(&mut self, round: u64, mixer_tags: &[u8]) {
        let signed = SignedDirectory::sign(directory(round, mixer_tags), &coordinator());
        for i in 0..self.nodes.len() {
            if !self.dead.contains(&i) {
                self.send(i, OpenRound {
                    directory: signed.clone(),
                });
            }
        }
        self.settle();
        self.client_rsp.clear();
    }

    fn fetch(&mut self, i: usize, round: u64) -> FetchBundleOk {
        self.client_rsp.clear();
        self.send(i, FetchBundle { round });
        self.settle();
        let frame = self
            .client_rsp
            .iter()
            .find(|f| f.opcode == FetchBundleOk::OPCODE)
            .expect("fetch answered");
        FetchBundleOk::from_frame(frame).unwrap()
    }
}

#[test]
fn publication_to_one_node_serves_identical_bundles_from_all() {
    let mut net = Net::new(3);
    net.open_all(1, &[1, 2]);
    net.send(0, PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    net.send(0, PublishKey {
        record: record(2, 1, 10, 0x22),
    });
    net.send(0, PublishParams { params: params(1) });
    net.settle();

    let mut encodings = Vec::new();
    for i in 0..3 {
        let rsp = net.fetch(i, 1);
        assert_eq!(rsp.status, BUNDLE_STATUS_OK, "node {i} serves the bundle");
        let bundle = rsp.bundle.unwrap();
        assert!(bundle.validate(&coordinator().public).is_ok());
        encodings.push(bundle.encode());
    }
    assert_eq!(encodings[0], encodings[1]);
    assert_eq!(encodings[1], encodings[2]);
}

#[test]
fn fetch_heals_gaps_through_the_overlay() {
    let mut net = Net::new(3);
    net.open_all(1, &[1]);
    // node 0 takes the publication but its replication traffic is eaten
    net.send(0, PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    net.send(0, PublishParams { params: params(1) });
    net.nodes[0].2.take_sent();
    net.nodes[0].2.take_replies();

    // node 2 has nothing locally; its fetch must pull both pieces from 0
    let rsp = net.fetch(2, 1);
    assert_eq!(rsp.status, BUNDLE_STATUS_OK);
    let bundle = rsp.bundle.unwrap();
    assert!(bundle.validate(&coordinator().public).is_ok());
    assert_eq!(bundle.records[0].public_key.0, [0x11; 32]);
}

#[test]
fn one_reachable_info_node_is_enough() {
    let mut net = Net::new(3);
    net.open_all(1, &[1, 2]);
    net.send(1, PublishKey {
        record: record(1, 1, 10, 0x11),
    });
    net.send(1, PublishKey {
        record: record(2, 1, 10, 0x22),
    });
    net.send(1, PublishParams { params: params(1) });
    net.settle();

    net.dead.insert(0);
    net.dead.insert(2);
    let rsp = net.fetch(1, 1);
    assert_eq!(rsp.status, BUNDLE_STATUS_OK);
    assert!(rsp.bundle.unwrap().validate(&coordinator().public).is_ok());
}

#[test]
fn recovered_node_reheals_from_peers() {
    let mut net = Net::new(3);
    net.open_all(2, &[1]);
    net.send(0, PublishKey {
        record: record(1, 2, 10, 0x33),
    });
    net.send(0, PublishParams { params: params(2) });
    net.settle();

    // node 1 crashes and comes back empty
    {
        let (_, node, ctx) = &mut net.nodes[1];
        node.handle(Event::Recovered, ctx);
    }
    let rid = net.next_rid;
    let coord = NetAddr::new("coord", 6000).unwrap();
    net.deliver_to(1, coord, RegisterOk { accepted: true }.into_frame(rid));
    net.settle();
    assert_eq!(net.fetch(1, 2).status, BUNDLE_STATUS_UNKNOWN_ROUND);

    // the directory comes back with the next open; records come from peers
    let signed = SignedDirectory::sign(directory(2, &[1]), &coordinator());
    net.send(1, OpenRound {
        directory: signed,
    });
    net.settle();
    let rsp = net.fetch(1, 2);
    assert_eq!(rsp.status, BUNDLE_STATUS_OK);
    assert_eq!(rsp.bundle.unwrap().records[0].public_key.0, [0x33; 32]);
}
