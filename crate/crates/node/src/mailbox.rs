//! Mailbox storage and the node that serves it.
//!
//! A mailbox is a numbered column of opaque blobs. Mixers append, clients
//! download whole columns, and nothing here ever looks inside a blob or at
//! who is asking: the fetch path takes a mailbox id and a round and returns
//! every record, so the server cannot distinguish recipients even if it
//! wanted to.
//!
//! Two interchangeable backends implement [`MailboxStore`]: an in-memory
//! map and an append-log-per-mailbox file store. Their contracts are
//! differential-tested; the file store additionally survives a restart.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Seek, SeekFrom, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use zephyr_core::envelope::{NetAddr, PAD_BUCKETS};
use zephyr_core::proto::{
    Append, AppendOk, Contact, FetchAll, FetchAllOk, FetchedRecord, Frame, OpenRound, OpenRoundOk,
    Purge, PurgeOk, Register, RegisterOk, Role, WireMsg, MAILBOX_STATUS_OK,
    MAILBOX_STATUS_TOO_LARGE, MAILBOX_STATUS_WRONG_ROUND,
};
use zephyr_core::sign::{Keypair, VerifyingKey};
use zephyr_core::wire::{Reader, Writer};

use crate::runtime::{Context, Event, NodeLogic, Peer};

/// Largest acceptable record: the widest padding bucket sealed for the
/// production pairing. Overhead breakdown: 1 version + 4+96 digest-carrier
/// point + 4+32 masked digest + 24 nonce + 4 body prefix + 16 box tag.
pub const MAX_BLOB_LEN: usize = PAD_BUCKETS[2] + 181;

/// Storage contract shared by both backends. Appends within one mailbox
/// serialize internally so sequence numbers stay gapless; reads snapshot.
/// An I/O failure in the durable backend is fatal by design: a storage node
/// that cannot store has nothing useful left to do.
pub trait MailboxStore: Send + Sync {
    /// Persists the blob, returning its 1-based seq within (mailbox, round).
    fn append(&self, mailbox_id: &[u8; 32], round: u64, blob: Vec<u8>) -> u64;
    /// Every record for (mailbox, round) in seq order.
    fn fetch(&self, mailbox_id: &[u8; 32], round: u64) -> Vec<FetchedRecord>;
    /// Deletes exactly that round's records, returning how many.
    fn purge_round(&self, round: u64) -> u64;
    /// Deletes all records with round < `limit`, returning how many.
    fn purge_below(&self, limit: u64) -> u64;
    /// Stored payload bytes.
    fn footprint(&self) -> u64;
}

// ---- in-memory backend -------------------------------------------------------

#[derive(Default)]
pub struct MemoryStore {
    columns: Mutex<BTreeMap<([u8; 32], u64), Vec<Vec<u8>>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore::default()
    }
}

impl MailboxStore for MemoryStore {
    fn append(&self, mailbox_id: &[u8; 32], round: u64, blob: Vec<u8>) -> u64 {
        let mut cols = self.columns.lock().unwrap();
        let col = cols.entry((*mailbox_id, round)).or_default();
        col.push(blob);
        col.len() as u64
    }

    fn fetch(&self, mailbox_id: &[u8; 32], round: u64) -> Vec<FetchedRecord> {
        let cols = self.columns.lock().unwrap();
        cols.get(&(*mailbox_id, round))
            .map(|col| {
                col.iter()
                    .enumerate()
                    .map(|(i, blob)| FetchedRecord {
                        seq: (i + 1) as u64,
                        blob: blob.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn purge_round(&self, round: u64) -> u64 {
        let mut cols = self.columns.lock().unwrap();
        let mut removed = 0;
        cols.retain(|(_, r), col| {
            if *r == round {
                removed += col.len() as u64;
                false
            } else {
                true
            }
        });
        removed
    }

    fn purge_below(&self, limit: u64) -> u64 {
        let mut cols = self.columns.lock().unwrap();
        let mut removed = 0;
        cols.retain(|(_, r), col| {
            if *r < limit {
                removed += col.len() as u64;
                false
            } else {
                true
            }
        });
        removed
    }

    fn footprint(&self) -> u64 {
        let cols = self.columns.lock().unwrap();
        cols.values().flatten().map(|b| b.len() as u64).sum()
    }
}

// ---- durable backend ---------------------------------------------------------

/// One append-log per mailbox under `dir`, named by the hex mailbox id.
/// Record layout: [round u64 LE][len u32 LE][blob]. The per-round offsets
/// index is rebuilt by scanning on open, so a crash between append and
/// nothing loses at most the torn tail record.
pub struct FileStore {
    dir: PathBuf,
    index: Mutex<HashMap<[u8; 32], MailboxIndex>>,
}

#[derive(Default)]
struct MailboxIndex {
    /// round → (file offset, blob length) per record, in append order.
    by_round: BTreeMap<u64, Vec<(u64, u32)>>,
}

const RECORD_HEADER: usize = 8 + 4;

impl FileStore {
    pub fn open(dir: &Path) -> FileStore {
        fs::create_dir_all(dir).expect("mailbox dir");
        let mut index = HashMap::new();
        for entry in fs::read_dir(dir).expect("mailbox dir scan") {
            let entry = entry.expect("dir entry");
            let name = entry.file_name();
            let Some(hexid) = name.to_str().and_then(|n| n.strip_suffix(".log")) else {
                continue;
            };
            let Ok(raw) = hex::decode(hexid) else {
                continue;
            };
            let Ok(mailbox_id) = <[u8; 32]>::try_from(raw.as_slice()) else {
                continue;
            };
            index.insert(mailbox_id, Self::scan(&entry.path()));
        }
        FileStore {
            dir: dir.to_path_buf(),
            index: Mutex::new(index),
        }
    }

    fn scan(path: &Path) -> MailboxIndex {
        let bytes = fs::read(path).expect("mailbox log read");
        let mut idx = MailboxIndex::default();
        let mut r = Reader::new(&bytes);
        loop {
            if r.remaining() < RECORD_HEADER {
                break; // clean end, or a torn header: either way, stop
            }
            let Ok(round) = r.u64() else { break };
            let at = r.offset() as u64 + 4;
            let Ok(blob) = r.bytes() else { break };
            idx.by_round.entry(round).or_default().push((at, blob.len() as u32));
        }
        idx
    }

    fn log_path(&self, mailbox_id: &[u8; 32]) -> PathBuf {
        self.dir.join(format!("{}.log", hex::encode(mailbox_id)))
    }

    /// Rewrites one mailbox's log keeping only rounds `keep` says yes to.
    fn compact(&self, mailbox_id: &[u8; 32], idx: &mut MailboxIndex, keep: impl Fn(u64) -> bool) -> u64 {
        let purged: u64 = idx
            .by_round
            .iter()
            .filter(|(r, _)| !keep(**r))
            .map(|(_, v)| v.len() as u64)
            .sum();
        if purged == 0 {
            return 0;
        }
        let path = self.log_path(mailbox_id);
        let old = fs::read(&path).expect("mailbox log read");
        let mut w = Writer::new();
        let mut fresh = MailboxIndex::default();
        for (&round, entries) in &idx.by_round {
            if !keep(round) {
                continue;
            }
            for &(off, len) in entries {
                let blob = &old[off as usize..off as usize + len as usize];
                w.u64(round);
                let at = w.len() as u64 + 4;
                w.bytes(blob);
                fresh.by_round.entry(round).or_default().push((at, len));
            }
        }
        let tmp = path.with_extension("log.tmp");
        fs::write(&tmp, w.finish()).expect("mailbox log write");
        fs::rename(&tmp, &path).expect("mailbox log swap");
        *idx = fresh;
        purged
    }
}

impl MailboxStore for FileStore {
    fn append(&self, mailbox_id: &[u8; 32], round: u64, blob: Vec<u8>) -> u64 {
        let mut index = self.index.lock().unwrap();
        let idx = index.entry(*mailbox_id).or_default();
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_path(mailbox_id))
            .expect("mailbox log open");
        let start = file.seek(SeekFrom::End(0)).expect("mailbox log seek");
        let mut w = Writer::new();
        w.u64(round);
        w.bytes(&blob);
        file.write_all(&w.finish()).expect("mailbox log append");
        let entries = idx.by_round.entry(round).or_default();
        entries.push((start + RECORD_HEADER as u64, blob.len() as u32));
        entries.len() as u64
    }

    fn fetch(&self, mailbox_id: &[u8; 32], round: u64) -> Vec<FetchedRecord> {
        let index = self.index.lock().unwrap();
        let Some(idx) = index.get(mailbox_id) else {
            return Vec::new();
        };
        let Some(entries) = idx.by_round.get(&round) else {
            return Vec::new();
        };
        let bytes = fs::read(self.log_path(mailbox_id)).expect("mailbox log read");
        entries
            .iter()
            .enumerate()
            .map(|(i, &(off, len))| FetchedRecord {
                seq: (i + 1) as u64,
                blob: bytes[off as usize..off as usize + len as usize].to_vec(),
            })
            .collect()
    }

    fn purge_round(&self, round: u64) -> u64 {
        let mut index = self.index.lock().unwrap();
        let ids: Vec<[u8; 32]> = index.keys().copied().collect();
        let mut removed = 0;
        for id in ids {
            let idx = index.get_mut(&id).unwrap();
            removed += self.compact(&id, idx, |r| r != round);
        }
        removed
    }

    fn purge_below(&self, limit: u64) -> u64 {
        let mut index = self.index.lock().unwrap();
        let ids: Vec<[u8; 32]> = index.keys().copied().collect();
        let mut removed = 0;
        for id in ids {
            let idx = index.get_mut(&id).unwrap();
            removed += self.compact(&id, idx, |r| r >= limit);
        }
        removed
    }

    fn footprint(&self) -> u64 {
        let index = self.index.lock().unwrap();
        index
            .values()
            .flat_map(|idx| idx.by_round.values().flatten())
            .map(|&(_, len)| len as u64)
            .sum()
    }
}

// ---- node logic ---------------------------------------------------------------

const REGISTER_TOKEN: u64 = 1;
const REGISTER_RETRY_MS: u64 = 1000;

pub struct MailboxNode {
    keypair: Keypair,
    coordinator: NetAddr,
    coordinator_pk: VerifyingKey,
    store: Box<dyn MailboxStore>,
    /// None until the first OpenRound lands (also after a crash: round state
    /// is volatile, the store is not).
    current_round: Option<u64>,
    registered: bool,
}

impl MailboxNode {
    pub fn new(
        keypair: Keypair,
        coordinator: NetAddr,
        coordinator_pk: VerifyingKey,
        store: Box<dyn MailboxStore>,
    ) -> Self {
        MailboxNode {
            keypair,
            coordinator,
            coordinator_pk,
            store,
            current_round: None,
            registered: false,
        }
    }

    pub fn current_round(&self) -> Option<u64> {
        self.current_round
    }

    fn register(&mut self, ctx: &mut dyn Context) {
        self.registered = false;
        let msg = Register {
            role: Role::Mailbox,
            contact: Contact {
                id: self.keypair.node_id(),
                addr: ctx.self_addr().clone(),
            },
            public_key: self.keypair.public.as_bytes().to_vec(),
        };
        ctx.send(&self.coordinator, msg.into_frame(REGISTER_TOKEN));
        ctx.set_timer(REGISTER_RETRY_MS, REGISTER_TOKEN);
    }

    fn on_frame(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
        match frame.opcode {
            zephyr_core::proto::Opcode::RegisterOk => {
                if RegisterOk::from_frame(frame).is_ok() {
                    self.registered = true;
                }
            }
            zephyr_core::proto::Opcode::OpenRound => {
                let Ok(msg) = OpenRound::from_frame(frame) else {
                    return;
                };
                if !msg.directory.verify(&self.coordinator_pk) {
                    log::warn!("openround with bad directory signature dropped");
                    return;
                }
                let round = msg.directory.directory.round;
                if self.current_round.is_some_and(|r| round < r) {
                    return; // replay of an older round
                }
                self.current_round = Some(round);
                // retention window is current + previous
                self.store.purge_below(round.saturating_sub(1));
                ctx.reply(from, OpenRoundOk { round }.into_frame(frame.request_id));
            }
            zephyr_core::proto::Opcode::Append => {
                let Ok(msg) = Append::from_frame(frame) else {
                    return;
                };
                let current = self.current_round.unwrap_or(0);
                let (status, seq) = if self.current_round != Some(msg.round) {
                    (MAILBOX_STATUS_WRONG_ROUND, 0)
                } else if msg.blob.len() > MAX_BLOB_LEN {
                    (MAILBOX_STATUS_TOO_LARGE, 0)
                } else {
                    let seq = self.store.append(&msg.mailbox_id, msg.round, msg.blob);
                    (MAILBOX_STATUS_OK, seq)
                };
                ctx.reply(
                    from,
                    AppendOk {
                        status,
                        seq,
                        round: current,
                    }
                    .into_frame(frame.request_id),
                );
            }
            zephyr_core::proto::Opcode::FetchAll => {
                let Ok(msg) = FetchAll::from_frame(frame) else {
                    return;
                };
                let readable = self
                    .current_round
                    .is_some_and(|r| msg.round == r || msg.round + 1 == r);
                let (status, records) = if readable {
                    (MAILBOX_STATUS_OK, self.store.fetch(&msg.mailbox_id, msg.round))
                } else {
                    (MAILBOX_STATUS_WRONG_ROUND, Vec::new())
                };
                ctx.reply(
                    from,
                    FetchAllOk { status, records }.into_frame(frame.request_id),
                );
            }
            zephyr_core::proto::Opcode::Purge => {
                let Ok(msg) = Purge::from_frame(frame) else {
                    return;
                };
                // current and previous rounds are protected; purging them is
                // a guarded no-op, not an error
                let purgeable = self
                    .current_round
                    .is_some_and(|r| msg.round + 1 < r);
                let removed = if purgeable {
                    self.store.purge_round(msg.round)
                } else {
                    0
                };
                ctx.reply(
                    from,
                    PurgeOk {
                        status: MAILBOX_STATUS_OK,
                        removed,
                    }
                    .into_frame(frame.request_id),
                );
            }
            _ => {}
        }
    }
}

impl NodeLogic for MailboxNode {
    fn handle(&mut self, event: Event, ctx: &mut dyn Context) {
        match event {
            Event::Started => self.register(ctx),
            Event::Recovered => {
                self.current_round = None;
                self.register(ctx);
            }
            Event::Timer { token } if token == REGISTER_TOKEN => {
                if !self.registered {
                    self.register(ctx);
                }
            }
            Event::Timer { .. } | Event::Email { .. } => {}
            Event::Frame { from, frame } => self.on_frame(&from, &frame, ctx),
        }
    }

    fn footprint(&self) -> u64 {
        self.store.footprint()
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_blob_admits_exactly_the_widest_sealed_bucket() {
        use rand::SeedableRng;
        use zephyr_core::envelope::{pad, seal_to_recipient};
        use zephyr_core::ibe::{setup, Identity};
        use zephyr_core::pairing::Bls;

        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let master = setup::<Bls, _>(&mut rng);
        let to = Identity::new("x@y.z").unwrap();
        let body = pad(&vec![7u8; PAD_BUCKETS[2] - 4]).unwrap();
        assert_eq!(body.len(), PAD_BUCKETS[2]);
        let sealed = seal_to_recipient(&master.public, &to, &body, &mut rng);
        assert_eq!(sealed.encode().len(), MAX_BLOB_LEN);
    }
}
