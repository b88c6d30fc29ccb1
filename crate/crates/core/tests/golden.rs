//! Golden wire-format vectors.
//!
//! The .bin files under tests/golden/ pin the serialized form of every
//! long-lived object. If an encoding change is intentional, regenerate with
//! `UPDATE_GOLDEN=1 cargo test -p zephyr-core --test golden` and review the
//! diff; an unintentional diff here means a protocol break.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use zephyr_core::envelope::{
    onion_wrap, seal_to_recipient, Address, MixerKeyPair, NetAddr, RouteHop,
};
use zephyr_core::ibe::{self, Identity};
use zephyr_core::ids::NodeId;
use zephyr_core::pairing::Bls;
use zephyr_core::proto::{
    Contact, Frame, KeyBundle, MixerKeyRecord, ParamsBundle, Ping, RoundDirectory,
    SignedDirectory, WireMsg,
};
use zephyr_core::sign::Keypair;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Compares `actual` against the stored vector, or rewrites it when
/// UPDATE_GOLDEN is set.
fn check(name: &str, actual: &[u8]) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path)
        .unwrap_or_else(|_| panic!("missing golden vector {name}; see module docs"));
    assert_eq!(
        expected,
        actual,
        "encoding of {name} changed; if intentional, regenerate goldens"
    );
}

fn contact(tag: u8, host: &str, port: u16) -> Contact {
    Contact {
        id: NodeId([tag; 20]),
        addr: NetAddr::new(host, port).unwrap(),
    }
}

fn fixture_directory() -> RoundDirectory {
    RoundDirectory {
        round: 7,
        coordinator: contact(0x0c, "coord.example.net", 6000),
        mixers: vec![
            contact(0x01, "mix-a.example.net", 7001),
            contact(0x02, "mix-b.example.net", 7002),
            contact(0x03, "mix-c.example.net", 7003),
        ],
        info_nodes: vec![contact(0x0a, "info.example.net", 8001)],
        key_service: contact(0x0b, "keys.example.net", 8500),
        mailbox: contact(0x0d, "mail.example.net", 9000),
        mailbox_count: 16,
        mailbox_salt: [0x51; 32],
        open_time_ms: 70_000,
        round_duration_ms: 10_000,
        max_route_len: 5,
    }
}

#[test]
fn address_vectors() {
    let mut id = [0u8; 32];
    id[31] = 1;
    let mailbox = Address::Mailbox {
        net: NetAddr::new("h", 9000).unwrap(),
        mailbox_id: id,
    };
    check("address_mailbox.bin", &mailbox.encode());
    assert_eq!(
        Address::decode(&std::fs::read(golden_path("address_mailbox.bin")).unwrap()).unwrap(),
        mailbox
    );

    let mixer = Address::Mixer(NetAddr::new("mix-a.example.net", 7001).unwrap());
    check("address_mixer.bin", &mixer.encode());
    check("address_mailbox_slot.bin", &mailbox.encode_slot());
}

#[test]
fn frame_vector() {
    let frame = Ping {
        from: contact(0xaa, "n", 5),
    }
    .into_frame(0x0102030405060708);
    check("frame_ping.bin", &frame.encode());
    let loaded = Frame::decode(&std::fs::read(golden_path("frame_ping.bin")).unwrap()).unwrap();
    assert_eq!(loaded, frame);
}

#[test]
fn signed_directory_vector() {
    let keypair = Keypair::from_seed([7; 32]);
    let signed = SignedDirectory::sign(fixture_directory(), &keypair);
    check("directory_signed.bin", &signed.encode());

    let loaded =
        SignedDirectory::decode(&std::fs::read(golden_path("directory_signed.bin")).unwrap())
            .unwrap();
    assert!(loaded.verify(&keypair.public));
    assert_eq!(loaded.directory, fixture_directory());
}

#[test]
fn sealed_message_vector() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5ea1);
    let master = ibe::setup::<Bls, _>(&mut rng);
    let alice = Identity::new("alice@example.com").unwrap();
    let sealed = seal_to_recipient(&master.public, &alice, b"golden payload", &mut rng);
    check("sealed_message.bin", &sealed.encode());

    // the stored bytes still open for the right key
    let key = ibe::extract(&master.secret, &alice);
    let loaded = zephyr_core::envelope::SealedMessage::<Bls>::decode(
        &std::fs::read(golden_path("sealed_message.bin")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        zephyr_core::envelope::open_as_recipient(&key, &loaded).unwrap(),
        b"golden payload"
    );
}

#[test]
fn onion_packet_vector() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x0111);
    let mixers: Vec<MixerKeyPair> = (0..3)
        .map(|i| MixerKeyPair::generate(NodeId([i; 20]), &mut rng))
        .collect();
    let route: Vec<RouteHop> = mixers
        .iter()
        .enumerate()
        .map(|(i, m)| RouteHop {
            key: m.public,
            addr: NetAddr::new(&format!("mix-{i}.example.net"), 7001 + i as u16).unwrap(),
        })
        .collect();
    let mailbox = Address::Mailbox {
        net: NetAddr::new("mail.example.net", 9000).unwrap(),
        mailbox_id: [0x33; 32],
    };
    let packet = onion_wrap(&route, mailbox.clone(), b"sealed-bytes", &mut rng).unwrap();
    check("onion_packet.bin", packet.as_bytes());

    // stored packet still peels through the whole route
    let mut blob = std::fs::read(golden_path("onion_packet.bin")).unwrap();
    for (i, kp) in mixers.iter().enumerate() {
        let (addr, inner) = zephyr_core::envelope::onion_peel(kp, &blob).unwrap();
        if i == 2 {
            assert_eq!(addr, mailbox);
            assert_eq!(inner, b"sealed-bytes");
        }
        blob = inner;
    }
}

#[test]
fn key_bundle_vector() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xb0d1);
    let keypair = Keypair::from_seed([7; 32]);
    let dir = fixture_directory();
    let records: Vec<MixerKeyRecord> = dir
        .mixers
        .iter()
        .map(|c| MixerKeyRecord {
            mixer_id: c.id,
            round: dir.round,
            public_key: MixerKeyPair::generate(c.id, &mut rng).public,
            address: c.addr.clone(),
            published_at_ms: 69_000,
        })
        .collect();
    let master = ibe::setup::<Bls, _>(&mut rng);
    let bundle = KeyBundle {
        round: dir.round,
        directory: SignedDirectory::sign(dir, &keypair),
        records,
        params: ParamsBundle {
            round: 7,
            mpk: master.public.to_bytes(),
        },
    };
    bundle.validate(&keypair.public).unwrap();
    check("key_bundle.bin", &bundle.encode());

    let loaded =
        KeyBundle::decode(&std::fs::read(golden_path("key_bundle.bin")).unwrap()).unwrap();
    loaded.validate(&keypair.public).unwrap();
    assert_eq!(loaded.digest(), bundle.digest());
}
