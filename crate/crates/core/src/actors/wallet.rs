//! User wallet: holds credential keys, certificates, vouchers and token
//! notes, and runs the user side of every flow.

use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{blind, prove_ownership, seal, seeded_rng, unblind, Domain, KeyId, ParamSet};
use crate::ledger::{KeyPurpose, Ledger};
use crate::{BlindingFactor, KeyPair, PublicKey, Signature};

use super::message::{AuthPayload, ProtocolMessage};
use super::{identity_plaintext, service_account, ChannelId, Envelope, Io, PartyId, Settings, TaskId, TaskOutcome, Variant};

/// What the harness asks a wallet to do within one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Plan {
    /// Setup with a CP (and, for V1/V2, an AP).
    Enroll { cp: PartyId, ap: Option<PartyId>, keys: usize, intervals: Vec<u64>, category: String, service: Option<PartyId> },
    /// Answer a service request through `ap`.
    Authorize { ap: PartyId },
    /// Obtain a voucher or token object ahead of time.
    Prefetch { ap: PartyId, service: Option<PartyId>, category: String },
    /// Answer a service request with a prefetched voucher or object.
    Redeem,
    /// Answer a service request with the last artifact presented to it.
    Replay,
    /// Pay for a session with a token note.
    Spend { ap: PartyId },
    /// Pay again with a note that was already spent.
    Respend { ap: PartyId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Pending,
    Certified,
    Used,
    Revoked,
}

/// One credential key `x_i` and what the wallet knows about it.
#[derive(Debug, Clone)]
pub struct CredentialSlot {
    pub key: KeyPair,
    pub cp: PartyId,
    pub category: String,
    pub interval: Option<u64>,
    /// `[x_i]` and its factor (V4).
    pub blinded: Option<(Vec<u8>, BlindingFactor)>,
    pub signer: Option<KeyId>,
    pub cert: Option<Signature>,
    pub state: SlotState,
}

#[derive(Debug, Clone)]
pub struct TokenNote {
    pub key: KeyPair,
    pub token_key: KeyId,
    pub factor: BlindingFactor,
    pub blinded: Vec<u8>,
    pub cp_sig: Option<Signature>,
    pub spent: bool,
}

/// Per-task progress.
#[derive(Debug, Clone)]
struct TaskState {
    plan: Plan,
    service: Option<(PartyId, ChannelId)>,
    nonce: Option<[u8; 32]>,
    ap_channel: Option<ChannelId>,
    slot: Option<usize>,
    note: Option<usize>,
    factor: Option<BlindingFactor>,
    one_time_id: Option<[u8; 32]>,
}

/// A prefetched artifact waiting for a service request.
#[derive(Debug, Clone)]
struct Prefetched {
    category: String,
    service: Option<PartyId>,
    msg: ProtocolMessage,
}

pub struct Wallet {
    pub id: PartyId,
    variant: Variant,
    settings: Settings,
    params: ParamSet,
    seed: Vec<u8>,
    rng: ChaCha20Rng,
    key_count: u64,
    intake: BTreeMap<PartyId, PublicKey>,
    slots: Vec<CredentialSlot>,
    notes: Vec<TokenNote>,
    /// V0 enrolment: CP and category.
    home: Option<(PartyId, String)>,
    identifiers: BTreeMap<PartyId, (Vec<u8>, Signature)>,
    details: BTreeMap<PartyId, (KeyId, KeyId)>,
    prefetched: Vec<Prefetched>,
    last_presented: BTreeMap<PartyId, ProtocolMessage>,
    last_spent: Option<usize>,
    tasks: BTreeMap<TaskId, TaskState>,
}

impl Wallet {
    pub fn new(id: &str, variant: Variant, settings: Settings, seed: &[u8], params: ParamSet) -> Self {
        Wallet {
            id: id.to_string(),
            variant,
            settings,
            params,
            seed: seed.to_vec(),
            rng: seeded_rng(&[seed, b"/rng"].concat()),
            key_count: 0,
            intake: BTreeMap::new(),
            slots: Vec::new(),
            notes: Vec::new(),
            home: None,
            identifiers: BTreeMap::new(),
            details: BTreeMap::new(),
            prefetched: Vec::new(),
            last_presented: BTreeMap::new(),
            last_spent: None,
            tasks: BTreeMap::new(),
        }
    }

    /// Registers a CP's identity intake key.
    pub fn add_cp(&mut self, cp: &str, intake: PublicKey) {
        self.intake.insert(cp.to_string(), intake);
    }

    pub fn slots(&self) -> &[CredentialSlot] {
        &self.slots
    }

    pub fn notes(&self) -> &[TokenNote] {
        &self.notes
    }

    pub fn keys(&self) -> impl Iterator<Item = &KeyPair> {
        self.slots.iter().map(|s| &s.key).chain(self.notes.iter().map(|n| &n.key))
    }

    fn fresh_key(&mut self) -> KeyPair {
        let seed = [self.seed.as_slice(), format!("/key/{}", self.key_count).as_bytes()].concat();
        self.key_count += 1;
        KeyPair::generate(&seed, self.params).expect("params fit")
    }

    fn identify(&mut self, cp: &str) -> Option<crate::crypto::SealedBox> {
        let intake = self.intake.get(cp)?.clone();
        let mut salt = [0u8; 16];
        self.rng.fill_bytes(&mut salt);
        Some(seal(&mut self.rng, &intake, &identity_plaintext(&self.id, &salt)))
    }

    fn fail(&mut self, io: &mut dyn Io, task: TaskId, reason: &str) {
        self.tasks.remove(&task);
        io.finish(task, TaskOutcome::Rejected(reason.to_string()));
    }

    fn done(&mut self, io: &mut dyn Io, task: TaskId, outcome: TaskOutcome) {
        self.tasks.remove(&task);
        io.finish(task, outcome);
    }

    /// Starts a task. Plans that answer a service request wait for it;
    /// enrolment and prefetch start talking immediately.
    pub fn begin(&mut self, io: &mut dyn Io, task: TaskId, plan: Plan) {
        let state = TaskState {
            plan: plan.clone(),
            service: None,
            nonce: None,
            ap_channel: None,
            slot: None,
            note: None,
            factor: None,
            one_time_id: None,
        };
        self.tasks.insert(task, state);
        match plan {
            Plan::Enroll { cp, ap, keys, intervals, category, service } => {
                if self.variant.tokens() && service.is_some() {
                    return;
                }
                self.enroll(io, task, &cp, ap.as_deref(), keys, &intervals, &category)
            }
            Plan::Prefetch { ap, service, category } => self.prefetch(io, task, &ap, service.as_deref(), &category),
            _ => {}
        }
    }

    fn enroll(&mut self, io: &mut dyn Io, task: TaskId, cp: &str, ap: Option<&str>, n: usize, intervals: &[u64], category: &str) {
        let v = self.variant;
        if v == Variant::V0 {
            self.home = Some((cp.to_string(), category.to_string()));
            self.done(io, task, TaskOutcome::Completed);
            return;
        }
        let Some(sealed) = self.identify(cp) else {
            self.fail(io, task, "unknown-cp-key");
            return;
        };
        let ch = io.new_channel();
        self.tasks.get_mut(&task).expect("task").ap_channel = Some(ch);
        let mut keys = Vec::new();
        let mut key_intervals = Vec::new();
        match v {
            Variant::V0 => unreachable!(),
            Variant::V1 => {
                let Some(ap) = ap else {
                    self.fail(io, task, "malformed-request");
                    return;
                };
                let msg = ProtocolMessage::Identify { sealed, keys, intervals: vec![], category: category.into(), service: None };
                io.send(&self.id, ap, Some(task), ch, 1, msg);
                return;
            }
            Variant::V2 | Variant::V3 | Variant::V3Off => {
                for _ in 0..n.max(1) {
                    let key = self.fresh_key();
                    keys.push(key.public.to_bytes());
                    self.slots.push(CredentialSlot {
                        key,
                        cp: cp.into(),
                        category: category.into(),
                        interval: None,
                        blinded: None,
                        signer: None,
                        cert: None,
                        state: SlotState::Pending,
                    });
                }
            }
            Variant::V4 | Variant::V4Off => {
                let wanted: Vec<u64> = if intervals.is_empty() { vec![0] } else { intervals.to_vec() };
                for &i in &wanted {
                    let Some(cp_i) = io.ledger().read(|l| credential_key(l, cp, category, Some(i))) else {
                        self.fail(io, task, "unknown-cp-key");
                        return;
                    };
                    for _ in 0..n.max(1) {
                        let key = self.fresh_key();
                        let factor = BlindingFactor::random(&mut self.rng, &cp_i);
                        let b = blind(Domain::CredentialKey, &key.public.to_bytes(), &factor, &cp_i)
                            .expect("factor matches signer")
                            .to_bytes(&cp_i);
                        keys.push(b.clone());
                        key_intervals.push(i);
                        self.slots.push(CredentialSlot {
                            key,
                            cp: cp.into(),
                            category: category.into(),
                            interval: Some(i),
                            blinded: Some((b, factor)),
                            signer: Some(cp_i.key_id()),
                            cert: None,
                            state: SlotState::Pending,
                        });
                    }
                }
            }
            Variant::V5 | Variant::V5Off => {
                let service = match &self.tasks[&task].plan {
                    Plan::Enroll { service, .. } => service.clone(),
                    _ => None,
                };
                let wanted = service.and_then(|s| self.details.get(&s).map(|d| d.1));
                let token_key = io.ledger().read(|l| match wanted {
                    Some(k) => l.state().key(&k).map(|r| r.public.clone()),
                    None => token_key(l, cp, category),
                });
                let Some(tk) = token_key else {
                    self.fail(io, task, "unknown-cp-key");
                    return;
                };
                for _ in 0..n.max(1) {
                    let key = self.fresh_key();
                    let factor = BlindingFactor::random(&mut self.rng, &tk);
                    let b = blind(Domain::CredentialKey, &key.public.to_bytes(), &factor, &tk)
                        .expect("factor matches signer")
                        .to_bytes(&tk);
                    keys.push(b.clone());
                    self.notes.push(TokenNote { key, token_key: tk.key_id(), factor, blinded: b, cp_sig: None, spent: false });
                }
            }
        }
        let step = if v.tokens() { 2 } else { 1 };
        let msg = ProtocolMessage::Identify { sealed, keys, intervals: key_intervals, category: category.into(), service: None };
        io.send(&self.id, cp, Some(task), ch, step, msg);
    }

    /// Picks a usable credential slot for `category`, preferring the most
    /// recent published interval and then enrolment order.
    fn pick_slot(&self, now: u64, category: &str) -> Option<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                s.category == category
                    && matches!(s.state, SlotState::Pending | SlotState::Certified)
                    && s.interval.is_none_or(|i| i.saturating_mul(self.settings.interval_ticks) <= now)
            })
            .min_by_key(|(k, s)| (std::cmp::Reverse(s.interval), *k))
            .map(|(k, _)| k)
    }

    fn pick_note(&self, ledger: &Ledger, category: &str, service: Option<&str>) -> Option<usize> {
        let wanted = service.and_then(|s| self.details.get(s)).map(|d| d.1);
        self.notes.iter().position(|n| {
            !n.spent
                && n.cp_sig.is_some()
                && match wanted {
                    Some(k) => n.token_key == k,
                    None => ledger.state().key(&n.token_key).is_some_and(|r| r.record.category == category),
                }
        })
    }

    /// Continues a credential flow once a slot is chosen: fetch the
    /// certificate if needed, then ask for a challenge.
    fn start_credential(&mut self, io: &mut dyn Io, task: TaskId, ap: &str, category: &str) {
        let steps = self.variant.steps();
        let Some(idx) = self.pick_slot(io.now(), category) else {
            self.fail(io, task, "no-certificate");
            return;
        };
        let ch = io.new_channel();
        {
            let t = self.tasks.get_mut(&task).expect("task");
            t.slot = Some(idx);
            t.ap_channel = Some(ch);
        }
        let slot = &mut self.slots[idx];
        match self.variant {
            Variant::V2 => {
                self.send_authorize(io, task, ap, None);
                return;
            }
            Variant::V3 | Variant::V3Off if slot.cert.is_none() => {
                let x = slot.key.public.to_bytes();
                let found = io.ledger().read(|l| {
                    l.state().certs().find(|c| c.cert.key_value == x).map(|c| c.cert.signature.clone())
                });
                match found {
                    Some(sig) => {
                        slot.signer = Some(sig.signer);
                        slot.cert = Some(sig);
                        slot.state = SlotState::Certified;
                    }
                    None => {
                        self.fail(io, task, "no-certificate");
                        return;
                    }
                }
            }
            Variant::V4 | Variant::V4Off if slot.cert.is_none() => {
                let (b, _) = slot.blinded.as_ref().expect("blinded slot");
                let bits = self.settings.prefix_bits.min(b.len() as u64 * 8);
                let prefix = b[..bits.div_ceil(8) as usize].to_vec();
                let signer = slot.signer.expect("signer known");
                io.send(&self.id, ap, Some(task), ch, steps.to_ap, ProtocolMessage::RequestCerts { signer, prefix_bits: bits, prefix });
                return;
            }
            _ => {}
        }
        io.send(&self.id, ap, Some(task), ch, steps.to_ap, ProtocolMessage::RequestChallenge);
    }

    fn send_authorize(&mut self, io: &mut dyn Io, task: TaskId, ap: &str, challenge: Option<crate::crypto::Challenge>) {
        let steps = self.variant.steps();
        let t = self.tasks.get(&task).expect("task").clone();
        let idx = t.slot.expect("slot chosen");
        let ch = t.ap_channel.expect("channel");
        let slot = self.slots[idx].clone();
        let proof = challenge.map(|c| prove_ownership(&slot.key, c));
        let payload = if self.variant.offline() {
            let mut id = [0u8; 32];
            self.rng.fill_bytes(&mut id);
            self.tasks.get_mut(&task).expect("task").one_time_id = Some(id);
            AuthPayload::OneTimeId(id)
        } else {
            let nonce = t.nonce.expect("request seen");
            let Some(ap_key) = io.ledger().read(|l| authorise_key(l, ap, &slot.category)) else {
                self.fail(io, task, "unknown-ap-key");
                return;
            };
            let factor = BlindingFactor::random(&mut self.rng, &ap_key);
            let b = blind(Domain::Nonce, &nonce, &factor, &ap_key).expect("factor matches").to_bytes(&ap_key);
            self.tasks.get_mut(&task).expect("task").factor = Some(factor);
            AuthPayload::BlindedNonce(b)
        };
        let cert = if self.variant == Variant::V2 { None } else { slot.cert.clone() };
        let msg = ProtocolMessage::Authorize { proof, key: slot.key.public.to_bytes(), cert, payload };
        io.send(&self.id, ap, Some(task), ch, steps.to_ap, msg);
    }

    fn send_spend(&mut self, io: &mut dyn Io, task: TaskId, ap: &str, note: usize, service: &str, offline: bool) {
        let steps = self.variant.steps();
        let n = &self.notes[note];
        let account = self.details.get(service).map(|d| d.0).unwrap_or_else(|| service_account(service));
        let endorsement = n.key.sign_in(Domain::Endorsement, account.as_bytes()).expect("non-empty");
        let one_time_id = offline.then(|| {
            let mut id = [0u8; 32];
            self.rng.fill_bytes(&mut id);
            id
        });
        let n = &self.notes[note];
        let msg = ProtocolMessage::Spend {
            key: n.key.public.to_bytes(),
            cp_sig: n.cp_sig.clone().expect("issued note"),
            endorsement,
            account,
            one_time_id,
        };
        let ch = io.new_channel();
        let t = self.tasks.get_mut(&task).expect("task");
        t.note = Some(note);
        t.ap_channel = Some(ch);
        t.one_time_id = one_time_id;
        io.send(&self.id, ap, Some(task), ch, steps.to_ap, msg);
    }

    fn prefetch(&mut self, io: &mut dyn Io, task: TaskId, ap: &str, service: Option<&str>, category: &str) {
        match self.variant {
            Variant::V3Off | Variant::V4Off => self.start_credential(io, task, ap, category),
            Variant::V5Off => {
                let Some(service) = service else {
                    self.fail(io, task, "malformed-request");
                    return;
                };
                let Some(note) = io.ledger().read(|l| self.pick_note(l, category, Some(service))) else {
                    self.fail(io, task, "no-voucher");
                    return;
                };
                self.send_spend(io, task, ap, note, service, true);
            }
            _ => self.fail(io, task, "unexpected-message"),
        }
    }

    fn present(&mut self, io: &mut dyn Io, task: TaskId, msg: ProtocolMessage) {
        let Some((service, ch)) = self.tasks.get(&task).and_then(|t| t.service.clone()) else {
            self.fail(io, task, "unexpected-message");
            return;
        };
        self.last_presented.insert(service.clone(), msg.clone());
        io.send(&self.id, &service, Some(task), ch, self.variant.steps().present, msg);
    }

    pub fn handle(&mut self, io: &mut dyn Io, env: &Envelope) {
        let Some(task) = env.task else {
            return;
        };
        let Some(state) = self.tasks.get(&task).cloned() else {
            return;
        };
        let steps = self.variant.steps();
        match (&state.plan, &env.msg) {
            (_, ProtocolMessage::Rejected { reason }) => {
                if reason == "revoked-credential" {
                    if let Some(i) = state.slot {
                        self.slots[i].state = SlotState::Revoked;
                    }
                }
                self.fail(io, task, reason);
            }
            (_, ProtocolMessage::Outcome { accepted, reason }) => {
                let outcome = match (&state.plan, accepted) {
                    (Plan::Enroll { .. }, true) => TaskOutcome::Completed,
                    (_, true) => TaskOutcome::Accepted,
                    (_, false) => TaskOutcome::Rejected(reason.clone()),
                };
                if let (Plan::Enroll { .. }, true) = (&state.plan, accepted) {
                    if self.variant == Variant::V2 {
                        for s in self.slots.iter_mut().filter(|s| s.state == SlotState::Pending && s.cert.is_some()) {
                            s.state = SlotState::Certified;
                        }
                    }
                }
                self.done(io, task, outcome);
            }
            (Plan::Enroll { cp, ap, keys, intervals, category, .. }, ProtocolMessage::ServiceDetails { service, account, token_key }) => {
                self.details.insert(service.clone(), (*account, *token_key));
                let (cp, ap, keys, intervals, category) = (cp.clone(), ap.clone(), *keys, intervals.clone(), category.clone());
                self.enroll(io, task, &cp, ap.as_deref(), keys, &intervals, &category);
            }
            (Plan::Enroll { ap: Some(ap), .. }, ProtocolMessage::Issued { identifier, sig }) => {
                self.identifiers.insert(ap.clone(), (identifier.clone(), sig.clone()));
                self.done(io, task, TaskOutcome::Completed);
            }
            (Plan::Enroll { ap: Some(ap), .. }, ProtocolMessage::Certificates { certs }) => {
                for (k, s) in certs {
                    if let Some(slot) = self.slots.iter_mut().find(|sl| &sl.key.public.to_bytes() == k) {
                        slot.cert = Some(s.clone());
                        slot.signer = Some(s.signer);
                    }
                }
                let ch = io.new_channel();
                io.send(&self.id, ap, Some(task), ch, 3, ProtocolMessage::Certificates { certs: certs.clone() });
            }
            (Plan::Enroll { .. }, ProtocolMessage::TokenNotes { notes }) => {
                for (b, sig) in notes {
                    let Some(n) = self.notes.iter_mut().find(|n| &n.blinded == b) else { continue };
                    let Some(tk) = io.ledger().read(|l| l.state().key(&n.token_key).map(|r| r.public.clone())) else {
                        continue;
                    };
                    if let Ok(s) = unblind(sig, &n.factor, &tk) {
                        if tk.verify_in(Domain::CredentialKey, &n.key.public.to_bytes(), &s) {
                            n.cp_sig = Some(s);
                        }
                    }
                }
                self.done(io, task, TaskOutcome::Completed);
            }
            (_, ProtocolMessage::Request { service, nonce, category }) => {
                if let Some(t) = self.tasks.get_mut(&task) {
                    t.service = Some((env.from.clone(), env.channel));
                    t.nonce = Some(*nonce);
                }
                self.on_request(io, task, &state.plan, service, category);
            }
            (Plan::Authorize { .. }, ProtocolMessage::Assertion { .. }) => {
                self.present(io, task, env.msg.clone());
            }
            (Plan::Authorize { ap } | Plan::Prefetch { ap, .. }, ProtocolMessage::CertList { certs, .. }) => {
                let idx = state.slot.expect("slot chosen");
                let slot = &mut self.slots[idx];
                let (b, factor) = slot.blinded.clone().expect("blinded slot");
                let signer = slot.signer.and_then(|k| io.ledger().read(|l| l.state().key(&k).map(|r| r.public.clone())));
                let found = certs.iter().find(|c| c.key_value == b).zip(signer).and_then(|(c, pk)| {
                    unblind(&c.sig, &factor, &pk)
                        .ok()
                        .filter(|s| pk.verify_in(Domain::CredentialKey, &slot.key.public.to_bytes(), s))
                });
                match found {
                    Some(s) => {
                        slot.cert = Some(s);
                        slot.state = SlotState::Certified;
                        let ch = state.ap_channel.expect("channel");
                        io.send(&self.id, ap, Some(task), ch, steps.to_ap, ProtocolMessage::RequestChallenge);
                    }
                    None => self.fail(io, task, "no-certificate"),
                }
            }
            (Plan::Authorize { ap } | Plan::Prefetch { ap, .. }, ProtocolMessage::Challenge { challenge }) => {
                let ap = ap.clone();
                self.send_authorize(io, task, &ap, Some(*challenge));
            }
            (Plan::Authorize { ap }, ProtocolMessage::BlindSignature { sig }) => {
                let nonce = state.nonce.expect("request seen");
                let factor = state.factor.expect("factor kept");
                let idx = state.slot.expect("slot chosen");
                let category = self.slots[idx].category.clone();
                let ap_key = io.ledger().read(|l| authorise_key(l, ap, &category));
                self.slots[idx].state = SlotState::Used;
                let Some(ap_key) = ap_key else {
                    self.fail(io, task, "unknown-ap-key");
                    return;
                };
                match unblind(sig, &factor, &ap_key) {
                    Ok(s) if ap_key.verify_in(Domain::Nonce, &nonce, &s) => {
                        self.present(io, task, ProtocolMessage::Authorization { nonce, sig: s });
                    }
                    _ => self.fail(io, task, "bad-signature"),
                }
            }
            (Plan::Prefetch { category, service, .. }, ProtocolMessage::Voucher(_) | ProtocolMessage::Object { .. }) => {
                if let Some(i) = state.slot {
                    self.slots[i].state = SlotState::Used;
                }
                self.prefetched.push(Prefetched { category: category.clone(), service: service.clone(), msg: env.msg.clone() });
                self.done(io, task, TaskOutcome::Completed);
            }
            (Plan::Spend { .. } | Plan::Respend { .. }, ProtocolMessage::SignedReceipt { .. }) => {
                self.present(io, task, env.msg.clone());
            }
            _ => self.fail(io, task, "unexpected-message"),
        }
    }

    fn on_request(&mut self, io: &mut dyn Io, task: TaskId, plan: &Plan, service: &str, category: &str) {
        let steps = self.variant.steps();
        match plan {
            Plan::Authorize { ap } => match self.variant {
                Variant::V0 => {
                    let Some((cp, home_category)) = self.home.clone() else {
                        self.fail(io, task, "no-certificate");
                        return;
                    };
                    let Some(sealed) = self.identify(&cp) else {
                        self.fail(io, task, "unknown-cp-key");
                        return;
                    };
                    let ch = io.new_channel();
                    let msg = ProtocolMessage::Identify {
                        sealed,
                        keys: vec![],
                        intervals: vec![],
                        category: home_category,
                        service: Some(service.to_string()),
                    };
                    io.send(&self.id, ap, Some(task), ch, steps.to_ap, msg);
                }
                Variant::V1 => {
                    let Some((identifier, sig)) = self.identifiers.get(ap).cloned() else {
                        self.fail(io, task, "unknown-account");
                        return;
                    };
                    let ch = io.new_channel();
                    let msg = ProtocolMessage::RequestIdentifier { identifier, sig, service: service.to_string() };
                    io.send(&self.id, ap, Some(task), ch, steps.to_ap, msg);
                }
                v if v.offline() || v.tokens() => self.fail(io, task, "unexpected-message"),
                _ => {
                    let ap = ap.clone();
                    self.start_credential(io, task, &ap, category);
                }
            },
            Plan::Redeem => {
                let pos = self
                    .prefetched
                    .iter()
                    .position(|p| p.category == category && p.service.as_deref().is_none_or(|s| s == service));
                match pos {
                    Some(i) => {
                        let p = self.prefetched.remove(i);
                        self.present(io, task, p.msg);
                    }
                    None => self.fail(io, task, "no-voucher"),
                }
            }
            Plan::Replay => {
                // a copy of the last presentation, or of a voucher still held
                let held = self
                    .prefetched
                    .iter()
                    .find(|p| p.category == category && p.service.as_deref().is_none_or(|s| s == service))
                    .map(|p| p.msg.clone());
                match self.last_presented.get(service).cloned().or(held) {
                    Some(msg) => self.present(io, task, msg),
                    None => self.fail(io, task, "no-voucher"),
                }
            }
            Plan::Spend { ap } => {
                let Some(note) = io.ledger().read(|l| self.pick_note(l, category, Some(service))) else {
                    self.fail(io, task, "insufficient-balance");
                    return;
                };
                self.notes[note].spent = true;
                self.last_spent = Some(note);
                let ap = ap.clone();
                self.send_spend(io, task, &ap, note, service, false);
            }
            Plan::Respend { ap } => {
                let Some(note) = self.last_spent else {
                    self.fail(io, task, "no-voucher");
                    return;
                };
                let ap = ap.clone();
                self.send_spend(io, task, &ap, note, service, false);
            }
            Plan::Enroll { .. } | Plan::Prefetch { .. } => self.fail(io, task, "unexpected-message"),
        }
    }
}

/// Registry lookup of a CP credential key (`CP` or `CP_i`).
fn credential_key(ledger: &Ledger, cp: &str, category: &str, interval: Option<u64>) -> Option<PublicKey> {
    ledger
        .state()
        .keys_in_order()
        .into_iter()
        .find(|k| {
            k.record.owner == cp
                && k.record.purpose == KeyPurpose::Credential
                && k.record.category == category
                && k.record.interval == interval
        })
        .map(|k| k.public.clone())
}

fn token_key(ledger: &Ledger, cp: &str, category: &str) -> Option<PublicKey> {
    ledger
        .state()
        .keys_in_order()
        .into_iter()
        .find(|k| k.record.owner == cp && k.record.purpose == KeyPurpose::Token && k.record.category == category)
        .map(|k| k.public.clone())
}

fn authorise_key(ledger: &Ledger, ap: &str, category: &str) -> Option<PublicKey> {
    ledger
        .state()
        .keys_in_order()
        .into_iter()
        .find(|k| k.record.owner == ap && k.record.purpose == KeyPurpose::Authorise && k.record.category == category)
        .map(|k| k.public.clone())
}
