//! The key service: master keypair custody, emailed-code authentication,
//! identity-key extraction, and per-round master rotation.
//!
//! [`PkgCore`] is the pure logic (challenge table, extraction, rotation) so
//! the auth rules are testable without any plumbing; [`PkgNode`] wires it to
//! the event runtime. The master secret lives only in memory and only inside
//! the core; nothing here serializes it, and a crash therefore costs the
//! current round's master (clients re-enroll after the next rotation, which
//! is the round boundary anyway).

use std::collections::HashMap;

use rand::Rng;

use zephyr_core::envelope::NetAddr;
use zephyr_core::ibe::{self, Identity, IdentityPrivateKey, MasterKeyPair};
use zephyr_core::pairing::Bls;
use zephyr_core::proto::{
    BeginAuth, BeginAuthOk, CompleteAuth, CompleteAuthOk, Contact, Frame, GetParams, GetParamsOk,
    Opcode, OpenRound, OpenRoundOk, ParamsBundle, PublishParams, PublishParamsOk, Register,
    RegisterOk, Role, Rotated, TriggerRotation, WireMsg, AUTH_STATUS_INVALID_IDENTITY,
    AUTH_STATUS_NOT_READY, AUTH_STATUS_OK, AUTH_STATUS_RATE_LIMITED, AUTH_STATUS_REJECTED,
};
use zephyr_core::sign::{Keypair, VerifyingKey};

use crate::runtime::{Context, Event, NodeLogic, Peer, RequestIds};

pub const CODE_TTL_MS: u64 = 10 * 60 * 1000;
pub const MAX_ATTEMPTS: u32 = 5;
/// Challenges one identity may open per round before being rate limited.
pub const MAX_CHALLENGES_PER_ROUND: u32 = 3;
const PUBLISH_RETRIES: u32 = 3;
const PUBLISH_TIMEOUT_MS: u64 = 500;

struct Challenge {
    code: String,
    issued_at: u64,
    attempts: u32,
}

/// Master-key custody and the authentication table. All methods are pure
/// state transitions; time and randomness come in as arguments.
#[derive(Default)]
pub struct PkgCore {
    round: u64,
    master: Option<MasterKeyPair<Bls>>,
    challenges: HashMap<Identity, Challenge>,
    /// identity → (round the counter belongs to, challenges issued then).
    issued: HashMap<Identity, (u64, u32)>,
}

impl PkgCore {
    pub fn new() -> Self {
        PkgCore::default()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_ready(&self) -> bool {
        self.master.is_some()
    }

    /// Serialized public parameters for the current round. Deterministic
    /// within a round: two calls yield identical bytes.
    pub fn params(&self) -> Option<ParamsBundle> {
        self.master.as_ref().map(|m| ParamsBundle {
            round: self.round,
            mpk: m.public.to_bytes(),
        })
    }

    /// Issues a fresh challenge, invalidating any prior one for the same
    /// identity. Returns the canonical identity and the code to be emailed.
    pub fn begin_auth<R: Rng + ?Sized>(
        &mut self,
        raw: &str,
        now: u64,
        rng: &mut R,
    ) -> Result<(Identity, String), u8> {
        let id = Identity::new(raw).map_err(|_| AUTH_STATUS_INVALID_IDENTITY)?;
        let counter = self.issued.entry(id.clone()).or_insert((self.round, 0));
        if counter.0 != self.round {
            *counter = (self.round, 0);
        }
        if counter.1 >= MAX_CHALLENGES_PER_ROUND {
            return Err(AUTH_STATUS_RATE_LIMITED);
        }
        counter.1 += 1;
        let code = format!("{:06}", rng.gen_range(0..1_000_000));
        self.challenges.insert(
            id.clone(),
            Challenge {
                code: code.clone(),
                issued_at: now,
                attempts: 0,
            },
        );
        Ok((id, code))
    }

    /// Exact-code match within TTL and attempt budget extracts the identity
    /// key. Every failure mode returns the same status: the caller learns
    /// nothing about whether the identity has a challenge, what was wrong,
    /// or how many tries are left.
    pub fn complete_auth(
        &mut self,
        raw: &str,
        code: &str,
        now: u64,
    ) -> Result<(IdentityPrivateKey<Bls>, ParamsBundle), u8> {
        let Some(master) = &self.master else {
            return Err(AUTH_STATUS_NOT_READY);
        };
        let Ok(id) = Identity::new(raw) else {
            return Err(AUTH_STATUS_REJECTED);
        };
        let Some(ch) = self.challenges.get_mut(&id) else {
            return Err(AUTH_STATUS_REJECTED);
        };
        if now.saturating_sub(ch.issued_at) > CODE_TTL_MS {
            self.challenges.remove(&id);
            return Err(AUTH_STATUS_REJECTED);
        }
        if ch.code != code {
            ch.attempts += 1;
            if ch.attempts >= MAX_ATTEMPTS {
                // dead challenge: even the right code is rejected from here on
                self.challenges.remove(&id);
            }
            return Err(AUTH_STATUS_REJECTED);
        }
        let key = ibe::extract(&master.secret, &id);
        self.challenges.remove(&id);
        Ok((key, self.params().expect("master present")))
    }

    /// Fresh master for `next_round`. The previous master secret is dropped
    /// here, which is the whole forward-secrecy argument: round-r ciphertexts
    /// become undecryptable once no key for round r exists anywhere.
    pub fn rotate<R: Rng + ?Sized>(&mut self, next_round: u64, rng: &mut R) -> ParamsBundle {
        self.master = Some(ibe::setup::<Bls, _>(rng));
        self.round = next_round;
        self.params().expect("just installed")
    }

    /// Crash semantics: everything volatile goes.
    pub fn reset(&mut self) {
        *self = PkgCore::default();
    }

    fn prune(&mut self, now: u64) {
        self.challenges
            .retain(|_, ch| now.saturating_sub(ch.issued_at) <= CODE_TTL_MS);
        let round = self.round;
        self.issued.retain(|_, (r, _)| *r == round);
    }
}

pub fn email_body(code: &str, round: u64) -> String {
    format!("zephyr identity verification\nround: {round}\ncode: {code}\n")
}

/// Pulls the code back out of an [`email_body`] message.
pub fn extract_code(body: &str) -> Option<&str> {
    body.lines().find_map(|l| l.strip_prefix("code: "))
}

// ---- node -----------------------------------------------------------------

const REGISTER_TOKEN: u64 = 1;
const REGISTER_RETRY_MS: u64 = 1000;
/// Request ids (and thus timer tokens) for PublishParams live here, clear of
/// REGISTER_TOKEN and below the DHT range.
const PUBLISH_IDS: u64 = 0x1000;

struct PendingPublish {
    to: NetAddr,
    attempts: u32,
}

struct PendingRotation {
    reply_to: Peer,
    request_id: u64,
    next_round: u64,
    awaiting: usize,
}

pub struct PkgNode {
    keypair: Keypair,
    coordinator: NetAddr,
    coordinator_pk: VerifyingKey,
    info_nodes: Vec<NetAddr>,
    core: PkgCore,
    registered: bool,
    ids: RequestIds,
    publishes: HashMap<u64, PendingPublish>,
    rotation: Option<PendingRotation>,
}

impl PkgNode {
    /// `info_seeds` bootstraps the publish targets; each verified directory
    /// replaces the list.
    pub fn new(
        keypair: Keypair,
        coordinator: NetAddr,
        coordinator_pk: VerifyingKey,
        info_seeds: Vec<NetAddr>,
    ) -> Self {
        PkgNode {
            keypair,
            coordinator,
            coordinator_pk,
            info_nodes: info_seeds,
            core: PkgCore::new(),
            registered: false,
            ids: RequestIds::starting_at(PUBLISH_IDS),
            publishes: HashMap::new(),
            rotation: None,
        }
    }

    pub fn core(&self) -> &PkgCore {
        &self.core
    }

    fn register(&mut self, ctx: &mut dyn Context) {
        self.registered = false;
        let msg = Register {
            role: Role::KeyService,
            contact: Contact {
                id: self.keypair.node_id(),
                addr: ctx.self_addr().clone(),
            },
            public_key: self.keypair.public.as_bytes().to_vec(),
        };
        ctx.send(&self.coordinator, msg.into_frame(REGISTER_TOKEN));
        ctx.set_timer(REGISTER_RETRY_MS, REGISTER_TOKEN);
    }

    fn publish_to(&mut self, to: NetAddr, attempts: u32, ctx: &mut dyn Context) -> u64 {
        let params = self.core.params().expect("rotation installed a master");
        let request_id = self.ids.allocate();
        ctx.send(&to, PublishParams { params }.into_frame(request_id));
        ctx.set_timer(PUBLISH_TIMEOUT_MS, request_id);
        self.publishes
            .insert(request_id, PendingPublish { to, attempts });
        request_id
    }

    fn finish_rotation_if_done(&mut self, ctx: &mut dyn Context) {
        let done = self
            .rotation
            .as_ref()
            .is_some_and(|r| r.awaiting == 0);
        if done {
            let r = self.rotation.take().unwrap();
            ctx.reply(
                &r.reply_to,
                Rotated {
                    next_round: r.next_round,
                    node: self.keypair.node_id(),
                }
                .into_frame(r.request_id),
            );
        }
    }

    fn on_frame(&mut self, from: &Peer, frame: &Frame, ctx: &mut dyn Context) {
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
                self.info_nodes = msg
                    .directory
                    .directory
                    .info_nodes
                    .iter()
                    .map(|c| c.addr.clone())
                    .collect();
                self.core.prune(ctx.now());
                ctx.reply(
                    from,
                    OpenRoundOk {
                        round: msg.directory.directory.round,
                    }
                    .into_frame(frame.request_id),
                );
            }
            Opcode::TriggerRotation => {
                let Ok(msg) = TriggerRotation::from_frame(frame) else {
                    return;
                };
                // A re-trigger for the already-current round is the
                // coordinator retrying a lost ack; rotating again would
                // orphan the params already published.
                if self.core.is_ready() && self.core.round() == msg.next_round {
                    ctx.reply(
                        from,
                        Rotated {
                            next_round: msg.next_round,
                            node: self.keypair.node_id(),
                        }
                        .into_frame(frame.request_id),
                    );
                    return;
                }
                self.publishes.clear();
                self.core.rotate(msg.next_round, ctx.rng());
                let targets = self.info_nodes.clone();
                self.rotation = Some(PendingRotation {
                    reply_to: from.clone(),
                    request_id: frame.request_id,
                    next_round: msg.next_round,
                    awaiting: targets.len(),
                });
                for to in targets {
                    self.publish_to(to, 1, ctx);
                }
                self.finish_rotation_if_done(ctx);
            }
            Opcode::PublishParamsOk => {
                if PublishParamsOk::from_frame(frame).is_err() {
                    return;
                }
                if self.publishes.remove(&frame.request_id).is_some() {
                    if let Some(r) = &mut self.rotation {
                        r.awaiting -= 1;
                    }
                    self.finish_rotation_if_done(ctx);
                }
            }
            Opcode::BeginAuth => {
                let Ok(msg) = BeginAuth::from_frame(frame) else {
                    return;
                };
                let status = match self.core.begin_auth(&msg.identity, ctx.now(), ctx.rng()) {
                    Ok((id, code)) => {
                        let round = self.core.round();
                        ctx.send_email(id.as_str(), &email_body(&code, round));
                        AUTH_STATUS_OK
                    }
                    Err(status) => status,
                };
                ctx.reply(from, BeginAuthOk { status }.into_frame(frame.request_id));
            }
            Opcode::CompleteAuth => {
                let Ok(msg) = CompleteAuth::from_frame(frame) else {
                    return;
                };
                let reply = match self.core.complete_auth(&msg.identity, &msg.code, ctx.now()) {
                    Ok((key, params)) => CompleteAuthOk {
                        status: AUTH_STATUS_OK,
                        key: key.encode(),
                        params: params.encode(),
                    },
                    Err(status) => CompleteAuthOk {
                        status,
                        key: Vec::new(),
                        params: Vec::new(),
                    },
                };
                ctx.reply(from, reply.into_frame(frame.request_id));
            }
            Opcode::GetParams => {
                if GetParams::from_frame(frame).is_err() {
                    return;
                }
                let params = self
                    .core
                    .params()
                    .map(|p| p.encode())
                    .unwrap_or_default();
                ctx.reply(from, GetParamsOk { params }.into_frame(frame.request_id));
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut dyn Context) {
        if token == REGISTER_TOKEN {
            if !self.registered {
                self.register(ctx);
            }
            return;
        }
        let Some(pending) = self.publishes.remove(&token) else {
            return; // stale: the ack beat the timer
        };
        if pending.attempts < PUBLISH_RETRIES && self.core.is_ready() {
            self.publish_to(pending.to, pending.attempts + 1, ctx);
        } else {
            // Give up on this info node; the rotation must not stall on it.
            log::warn!("params publish to {} abandoned", pending.to);
            if let Some(r) = &mut self.rotation {
                r.awaiting -= 1;
            }
            self.finish_rotation_if_done(ctx);
        }
    }
}

impl NodeLogic for PkgNode {
    fn handle(&mut self, event: Event, ctx: &mut dyn Context) {
        match event {
            Event::Started => self.register(ctx),
            Event::Recovered => {
                // master and challenges are volatile by design
                self.core.reset();
                self.publishes.clear();
                self.rotation = None;
                self.register(ctx);
            }
            Event::Timer { token } => self.on_timer(token, ctx),
            Event::Frame { from, frame } => self.on_frame(&from, &frame, ctx),
            Event::Email { .. } => {}
        }
    }

    fn footprint(&self) -> u64 {
        (self.core.challenges.len() * 64) as u64
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use zephyr_core::ibe::verify_key;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0x99)
    }

    #[test]
    fn codes_are_six_decimal_digits() {
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        for i in 0..200 {
            let (_, code) = core
                .begin_auth(&format!("u{i}@example.com"), 0, &mut rng)
                .unwrap();
            assert_eq!(code.len(), 6);
            assert!(code.bytes().all(|b| b.is_ascii_digit()), "{code}");
        }
    }

    #[test]
    fn attempt_budget_times_code_space_bounds_guess_probability() {
        // 5 attempts against 10^6 codes: 5e-6 per challenge. The two factors
        // are the whole soundness argument, so pin them.
        assert_eq!(MAX_ATTEMPTS, 5);
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        let (_, code) = core.begin_auth("a@b.c", 0, &mut rng).unwrap();
        let wrong = if code == "000000" { "000001" } else { "000000" };
        for _ in 0..MAX_ATTEMPTS {
            assert_eq!(
                core.complete_auth("a@b.c", wrong, 10).err(),
                Some(AUTH_STATUS_REJECTED)
            );
        }
        // budget exhausted: the true code is now worthless
        assert_eq!(
            core.complete_auth("a@b.c", &code, 10).err(),
            Some(AUTH_STATUS_REJECTED)
        );
    }

    #[test]
    fn reissue_invalidates_previous_code() {
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        let (_, first) = core.begin_auth("a@b.c", 0, &mut rng).unwrap();
        let (_, second) = core.begin_auth("a@b.c", 0, &mut rng).unwrap();
        assert_ne!(first, second, "seeded draw collision would break the test");
        assert_eq!(
            core.complete_auth("a@b.c", &first, 1).err(),
            Some(AUTH_STATUS_REJECTED)
        );
        assert!(core.complete_auth("a@b.c", &second, 1).is_ok());
    }

    #[test]
    fn rate_limit_per_identity_per_round() {
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        for _ in 0..MAX_CHALLENGES_PER_ROUND {
            core.begin_auth("a@b.c", 0, &mut rng).unwrap();
        }
        assert_eq!(
            core.begin_auth("a@b.c", 0, &mut rng).err(),
            Some(AUTH_STATUS_RATE_LIMITED)
        );
        // another identity is unaffected; a new round resets the counter
        assert!(core.begin_auth("z@b.c", 0, &mut rng).is_ok());
        core.rotate(2, &mut rng);
        assert!(core.begin_auth("a@b.c", 0, &mut rng).is_ok());
    }

    #[test]
    fn expired_challenge_rejected() {
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        let (_, code) = core.begin_auth("a@b.c", 1000, &mut rng).unwrap();
        assert!(core
            .complete_auth("a@b.c", &code, 1000 + CODE_TTL_MS)
            .is_ok());
        let (_, code) = core.begin_auth("a@b.c", 1000, &mut rng).unwrap();
        assert_eq!(
            core.complete_auth("a@b.c", &code, 1001 + CODE_TTL_MS).err(),
            Some(AUTH_STATUS_REJECTED)
        );
    }

    #[test]
    fn issued_keys_satisfy_the_verification_equation() {
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        let (_, code) = core.begin_auth("carol@example.com", 0, &mut rng).unwrap();
        let (key, params) = core.complete_auth("carol@example.com", &code, 1).unwrap();
        let mpk = zephyr_core::ibe::MasterPublicKey::<Bls>::from_bytes(&params.mpk).unwrap();
        assert!(verify_key(&mpk, &key));
    }

    #[test]
    fn rotation_changes_params_and_orphans_old_keys() {
        let mut core = PkgCore::new();
        let mut rng = rng();
        core.rotate(1, &mut rng);
        let p1 = core.params().unwrap();
        assert_eq!(core.params().unwrap(), p1, "stable within a round");

        let (_, code) = core.begin_auth("a@b.c", 0, &mut rng).unwrap();
        let (old_key, _) = core.complete_auth("a@b.c", &code, 1).unwrap();

        core.rotate(2, &mut rng);
        let p2 = core.params().unwrap();
        assert_ne!(p1.mpk, p2.mpk);
        let mpk2 = zephyr_core::ibe::MasterPublicKey::<Bls>::from_bytes(&p2.mpk).unwrap();
        assert!(!verify_key(&mpk2, &old_key), "old key dead after rotation");
    }

    #[test]
    fn not_ready_before_first_rotation() {
        let mut core = PkgCore::new();
        assert_eq!(
            core.complete_auth("a@b.c", "123456", 0).err(),
            Some(AUTH_STATUS_NOT_READY)
        );
        assert!(core.params().is_none());
    }

    #[test]
    fn code_extraction_roundtrip() {
        let body = email_body("042137", 9);
        assert_eq!(extract_code(&body), Some("042137"));
        assert_eq!(extract_code("no code here"), None);
    }
}
