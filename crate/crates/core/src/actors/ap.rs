//! Authentication provider: vouches for credentials it checks against its
//! ledger replica, signing nonces, vouchers, receipts or assertions.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;

use crate::crypto::{sha256, seeded_rng, Challenge, Domain, KeyId, ParamSet};
use crate::ledger::{KeyPurpose, KeyRecord, Ledger, Payload, Submission, TokenTransfer};
use crate::wire::signature_bytes;
use crate::{KeyPair, PublicKey, Signature};

use super::decide::{
    ap_assert_enrolled, ap_authorize, ap_check_identifier, ap_enroll_certs, ap_spend, assertion_message,
    spend_reason, ApInputs, ChallengeRecord, Verdict,
};
use super::message::{object_message, voucher_message, AuthPayload, OfflineVoucher, ProtocolMessage};
use super::{ChannelId, Decision, DecisionKind, Envelope, Io, PartyId, Settings, TaskId, Variant};

/// A V0/V1 identify request waiting for the CP's answer.
#[derive(Debug, Clone)]
struct Forward {
    user: PartyId,
    channel: ChannelId,
    task: Option<TaskId>,
    service: Option<String>,
}

pub struct AuthProvider {
    pub id: PartyId,
    variant: Variant,
    settings: Settings,
    params: ParamSet,
    seed: Vec<u8>,
    rng: ChaCha20Rng,
    keys: BTreeMap<String, KeyPair>,
    public_keys: BTreeMap<String, PublicKey>,
    timely: Option<KeyPair>,
    timely_count: u64,
    replica: Ledger,
    synced_at: u64,
    partitioned: bool,
    challenges: BTreeMap<Challenge, u64>,
    answered: BTreeSet<Challenge>,
    /// Every presented certificate signature this AP accepted.
    local_presented: BTreeSet<Vec<u8>>,
    /// Presented records not yet written to the ledger.
    unflushed: Vec<(String, Signature)>,
    enrolled: BTreeMap<Vec<u8>, Signature>,
    pushed_revoked: BTreeSet<Vec<u8>>,
    pairwise_secret: [u8; 32],
    /// CP intake key id to CP party.
    directory: BTreeMap<KeyId, PartyId>,
    forwards: BTreeMap<ChannelId, Forward>,
}

impl AuthProvider {
    pub fn new(
        id: &str,
        variant: Variant,
        settings: Settings,
        seed: &[u8],
        params: ParamSet,
        categories: &[String],
        replica: Ledger,
    ) -> Result<Self, crate::CryptoError> {
        let sub = |label: &str| [seed, b"/", label.as_bytes()].concat();
        let mut keys = BTreeMap::new();
        for c in categories {
            keys.insert(c.clone(), KeyPair::generate(&sub(&format!("authorise/{c}")), params)?);
        }
        let public_keys = keys.iter().map(|(c, k)| (c.clone(), k.public.clone())).collect();
        Ok(AuthProvider {
            id: id.to_string(),
            variant,
            settings,
            params,
            seed: seed.to_vec(),
            rng: seeded_rng(&sub("rng")),
            keys,
            public_keys,
            timely: None,
            timely_count: 0,
            replica,
            synced_at: 0,
            partitioned: false,
            challenges: BTreeMap::new(),
            answered: BTreeSet::new(),
            local_presented: BTreeSet::new(),
            unflushed: Vec::new(),
            enrolled: BTreeMap::new(),
            pushed_revoked: BTreeSet::new(),
            pairwise_secret: sha256(&[b"pairwise-secret:", seed]),
            directory: BTreeMap::new(),
            forwards: BTreeMap::new(),
        })
    }

    /// Tells the AP where to forward identify requests sealed to `intake`.
    pub fn add_cp(&mut self, intake: KeyId, cp: &str) {
        self.directory.insert(intake, cp.to_string());
    }

    pub fn registrations(&self) -> Vec<KeyRecord> {
        self.keys
            .iter()
            .map(|(category, k)| KeyRecord {
                owner: self.id.clone(),
                purpose: KeyPurpose::Authorise,
                category: category.clone(),
                public_key: k.public.to_bytes(),
                interval: None,
                expiry_tick: None,
            })
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &KeyPair> {
        self.keys.values().chain(self.timely.iter())
    }

    pub fn is_partitioned(&self) -> bool {
        self.partitioned
    }

    pub fn synced_at(&self) -> u64 {
        self.synced_at
    }

    pub fn replica(&self) -> &Ledger {
        &self.replica
    }

    pub fn set_partitioned(&mut self, io: &mut dyn Io, partitioned: bool) {
        self.partitioned = partitioned;
        if !partitioned {
            self.flush(io);
        }
    }

    /// Pairwise identifier `u'` for one service.
    pub fn pairwise(&self, identifier: &[u8], service: &str) -> Vec<u8> {
        sha256(&[b"pairwise:", &self.pairwise_secret, identifier, service.as_bytes()]).to_vec()
    }

    fn sync(&mut self, io: &mut dyn Io, task: Option<TaskId>) {
        if self.partitioned {
            return;
        }
        let from = self.replica.len();
        let fresh = io.ledger().entries_from(from);
        for e in &fresh {
            self.replica.replicate(e).expect("replica follows the shared ledger");
        }
        self.synced_at = io.now();
        if let Some(last) = fresh.last() {
            io.from_ledger(&self.id, task, 0, ProtocolMessage::Sync { from_seq: from, to_seq: last.seq });
        }
    }

    /// Start-of-tick work: rotate the timely key when due and flush
    /// presented records kept while partitioned.
    pub fn start_of_tick(&mut self, io: &mut dyn Io) {
        if self.partitioned {
            return;
        }
        if self.variant.uses_timely_key() {
            let now = io.now();
            let due = match &self.timely {
                None => true,
                Some(k) => self.replica.state().key(&k.key_id).and_then(|r| r.record.expiry_tick).is_none_or(|e| now >= e),
            };
            if due {
                self.rotate(io);
            }
        }
        self.flush(io);
    }

    fn rotate(&mut self, io: &mut dyn Io) {
        let Some((category, author)) = self.keys.iter().next().map(|(c, k)| (c.clone(), k.clone())) else {
            return;
        };
        let seed = [self.seed.as_slice(), format!("/timely/{}", self.timely_count).as_bytes()].concat();
        self.timely_count += 1;
        let key = KeyPair::generate(&seed, self.params).expect("params fit");
        let record = KeyRecord {
            owner: self.id.clone(),
            purpose: KeyPurpose::Timely,
            category,
            public_key: key.public.to_bytes(),
            interval: None,
            expiry_tick: Some(io.now() + self.settings.timely_period.max(1)),
        };
        if io.append(&self.id, None, 0, &Submission::new(&Payload::KeyRegistry(record), &author)).is_ok() {
            self.timely = Some(key);
        }
        self.sync(io, None);
    }

    fn flush(&mut self, io: &mut dyn Io) {
        for (category, cert_sig) in std::mem::take(&mut self.unflushed) {
            let author = &self.keys[&category];
            // Under the disallow policy a concurrent presentation elsewhere
            // may already be recorded; the duplicate write is refused.
            let _ = io.append(&self.id, None, 0, &Submission::new(&Payload::PresentedSignature { cert_sig }, author));
        }
    }

    fn inputs(&self, now: u64) -> ApInputs<'_> {
        ApInputs {
            variant: self.variant,
            settings: &self.settings,
            now,
            ledger: &self.replica,
            synced_at: self.synced_at,
            keys: &self.public_keys,
            timely: self.timely.as_ref().map(|k| k.key_id),
            local_presented: &self.local_presented,
            enrolled: &self.enrolled,
            pushed_revoked: &self.pushed_revoked,
        }
    }

    fn record(&self, io: &mut dyn Io, kind: DecisionKind, verdict: &Verdict) {
        let input = io.current_event();
        io.decide(Decision {
            party: self.id.clone(),
            kind,
            input,
            as_of: self.replica.head_seq(),
            synced_at: self.synced_at,
            verdict: verdict.clone(),
        });
    }

    pub fn handle(&mut self, io: &mut dyn Io, env: &Envelope) {
        let steps = self.variant.steps();
        let me = self.id.clone();
        let reply = |io: &mut dyn Io, step: u8, msg: ProtocolMessage| io.send(&me, &env.from, env.task, env.channel, step, msg);
        match &env.msg {
            ProtocolMessage::Identify { sealed, service, .. } if matches!(self.variant, Variant::V0 | Variant::V1) => {
                let Some(cp) = self.directory.get(&sealed.recipient).cloned() else {
                    reply(io, 0, ProtocolMessage::Rejected { reason: "unknown-cp-key".into() });
                    return;
                };
                let ch = io.new_channel();
                self.forwards.insert(
                    ch,
                    Forward { user: env.from.clone(), channel: env.channel, task: env.task, service: service.clone() },
                );
                let step = if self.variant == Variant::V0 { 3 } else { 2 };
                io.send(&self.id, &cp, env.task, ch, step, env.msg.clone());
            }
            ProtocolMessage::Issued { identifier, sig } => {
                let Some(fwd) = self.forwards.remove(&env.channel) else {
                    reply(io, 0, ProtocolMessage::Rejected { reason: "unexpected-message".into() });
                    return;
                };
                self.sync(io, fwd.task);
                let kind = if self.variant == Variant::V0 { DecisionKind::ApAssert } else { DecisionKind::ApEnroll };
                let verdict = ap_check_identifier(&self.inputs(io.now()), identifier, sig);
                self.record(io, kind, &verdict);
                let to_user = |io: &mut dyn Io, step: u8, msg: ProtocolMessage| {
                    io.send(&self.id, &fwd.user, fwd.task, fwd.channel, step, msg)
                };
                if !verdict.accepted {
                    to_user(io, 0, ProtocolMessage::Rejected { reason: verdict.reason });
                    return;
                }
                if self.variant == Variant::V0 {
                    let service = fwd.service.clone().unwrap_or_default();
                    let msg = self.assert(identifier, sig, &service);
                    to_user(io, steps.from_ap, msg);
                } else {
                    self.enrolled.insert(identifier.clone(), sig.clone());
                    to_user(io, 4, ProtocolMessage::Issued { identifier: identifier.clone(), sig: sig.clone() });
                }
            }
            ProtocolMessage::Rejected { reason } if self.forwards.contains_key(&env.channel) => {
                let fwd = self.forwards.remove(&env.channel).expect("checked");
                io.send(&self.id, &fwd.user, fwd.task, fwd.channel, 0, ProtocolMessage::Rejected { reason: reason.clone() });
            }
            ProtocolMessage::RequestIdentifier { identifier, sig, service } if self.variant == Variant::V1 => {
                self.sync(io, env.task);
                let verdict = ap_assert_enrolled(&self.inputs(io.now()), identifier, sig);
                self.record(io, DecisionKind::ApAssert, &verdict);
                if verdict.accepted {
                    let msg = self.assert(identifier, sig, service);
                    reply(io, steps.from_ap, msg);
                } else {
                    reply(io, 0, ProtocolMessage::Rejected { reason: verdict.reason });
                }
            }
            ProtocolMessage::Certificates { certs } if self.variant == Variant::V2 => {
                self.sync(io, env.task);
                let verdict = ap_enroll_certs(&self.inputs(io.now()), certs);
                self.record(io, DecisionKind::ApEnroll, &verdict);
                if verdict.accepted {
                    for (k, s) in certs {
                        self.enrolled.insert(k.clone(), s.clone());
                    }
                    reply(io, 0, ProtocolMessage::Outcome { accepted: true, reason: "enrolled".into() });
                } else {
                    reply(io, 0, ProtocolMessage::Rejected { reason: verdict.reason });
                }
            }
            ProtocolMessage::RequestChallenge => {
                let c = Challenge::random(&mut self.rng);
                self.challenges.insert(c, io.now());
                reply(io, steps.from_ap, ProtocolMessage::Challenge { challenge: c });
            }
            ProtocolMessage::RequestCerts { signer, prefix_bits, prefix } => {
                self.sync(io, env.task);
                let certs = self
                    .replica
                    .state()
                    .certs_by_signer(signer)
                    .into_iter()
                    .filter(|c| prefix_matches(&c.cert.key_value, *prefix_bits, prefix))
                    .map(|c| super::message::CertListing {
                        seq: c.seq,
                        key_value: c.cert.key_value.clone(),
                        sig: c.cert.signature.clone(),
                    })
                    .collect();
                reply(io, steps.from_ap, ProtocolMessage::CertList { signer: *signer, certs });
            }
            ProtocolMessage::Authorize { proof, key, cert, payload } if !self.variant.tokens() && self.variant >= Variant::V2 => {
                self.sync(io, env.task);
                let challenge = proof
                    .as_ref()
                    .map(|p| ChallengeRecord {
                        issued_at: self.challenges.get(&p.challenge).copied(),
                        answered_before: self.answered.contains(&p.challenge),
                    })
                    .unwrap_or_default();
                if let Some(p) = proof {
                    if self.challenges.contains_key(&p.challenge) {
                        self.answered.insert(p.challenge);
                    }
                }
                let now = io.now();
                let v = ap_authorize(&self.inputs(now), challenge, proof.as_ref(), key, cert.as_ref(), payload);
                let kind = match payload {
                    AuthPayload::BlindedNonce(_) => DecisionKind::ApAuthorize,
                    AuthPayload::OneTimeId(_) => DecisionKind::ApVoucher,
                };
                self.record(io, kind, &v.verdict);
                if !v.verdict.accepted {
                    reply(io, 0, ProtocolMessage::Rejected { reason: v.verdict.reason });
                    return;
                }
                let category = v.category.expect("accepted verdicts carry a category");
                if self.variant.blinded_certs() {
                    let cert = cert.clone().expect("accepted V4 presentations carry a certificate");
                    self.local_presented.insert(signature_bytes(&cert));
                    self.unflushed.push((category.clone(), cert));
                    if !self.partitioned {
                        self.flush(io);
                    }
                }
                let msg = match payload {
                    AuthPayload::BlindedNonce(b) => {
                        let k = &self.keys[&category];
                        let blinded = crate::BlindedMessage::from_bytes(b, &k.public).expect("checked");
                        ProtocolMessage::BlindSignature { sig: k.sign_blinded(&blinded).expect("same key") }
                    }
                    AuthPayload::OneTimeId(id) => {
                        let t = self.timely.as_ref().expect("checked");
                        let expiry_tick = self
                            .replica
                            .state()
                            .key(&t.key_id)
                            .and_then(|r| r.record.expiry_tick)
                            .expect("timely keys carry an expiry");
                        let m = voucher_message(id, &category, expiry_tick);
                        ProtocolMessage::Voucher(OfflineVoucher {
                            one_time_id: *id,
                            category,
                            expiry_tick,
                            sig: t.sign_in(Domain::Voucher, &m).expect("non-empty"),
                        })
                    }
                };
                reply(io, steps.from_ap, msg);
            }
            ProtocolMessage::Spend { key, cp_sig, endorsement, account, one_time_id } if self.variant.tokens() => {
                if self.partitioned {
                    reply(io, 0, ProtocolMessage::Rejected { reason: "ledger-unreachable".into() });
                    return;
                }
                self.sync(io, env.task);
                let transfer =
                    TokenTransfer { note_key: key.clone(), cp_sig: cp_sig.clone(), endorsement: endorsement.clone(), to: *account };
                let category = self.replica.state().key(&cp_sig.signer).map(|k| k.record.category.clone());
                let Some(author) = category.and_then(|c| self.keys.get(&c)).or_else(|| self.keys.values().next()).cloned()
                else {
                    reply(io, 0, ProtocolMessage::Rejected { reason: "unsupported-category".into() });
                    return;
                };
                let verdict = ap_spend(&self.inputs(io.now()), author.key_id, &transfer);
                self.record(io, DecisionKind::ApSpend, &verdict);
                if !verdict.accepted {
                    reply(io, 0, ProtocolMessage::Rejected { reason: verdict.reason });
                    return;
                }
                let payload = Payload::TokenTransfer(transfer);
                let receipt = match io.append(&self.id, env.task, steps.ledger_write, &Submission::new(&payload, &author)) {
                    Ok(r) => r,
                    Err(e) => {
                        reply(io, 0, ProtocolMessage::Rejected { reason: spend_reason(&e).into() });
                        return;
                    }
                };
                io.from_ledger(&self.id, env.task, steps.receipt, ProtocolMessage::LedgerReceipt { receipt });
                self.sync(io, env.task);
                let msg = match one_time_id {
                    None => ProtocolMessage::SignedReceipt {
                        receipt,
                        sig: author.sign_in(Domain::Receipt, &receipt.encode()).expect("non-empty"),
                    },
                    Some(id) => ProtocolMessage::Object {
                        one_time_id: *id,
                        receipt,
                        sig: author.sign_in(Domain::Object, &object_message(id, &receipt)).expect("non-empty"),
                    },
                };
                reply(io, steps.from_ap, msg);
            }
            ProtocolMessage::RevocationPush { revoked } => {
                self.pushed_revoked.extend(revoked.iter().cloned());
            }
            other => {
                let _ = other;
                reply(io, 0, ProtocolMessage::Rejected { reason: "unexpected-message".into() });
            }
        }
    }

    fn assert(&self, identifier: &[u8], cp_sig: &Signature, service: &str) -> ProtocolMessage {
        let category = self
            .replica
            .state()
            .key(&cp_sig.signer)
            .map(|k| k.record.category.clone())
            .unwrap_or_default();
        let key = self.keys.get(&category).or_else(|| self.keys.values().next()).expect("AP holds a key");
        let u = self.pairwise(identifier, service);
        let sig = key.sign_in(Domain::Identifier, &assertion_message(&u, service)).expect("non-empty");
        ProtocolMessage::Assertion { identifier: u, sig, service: service.to_string() }
    }
}

/// True if the leading `bits` bits of `value` equal those of `prefix`.
pub fn prefix_matches(value: &[u8], bits: u64, prefix: &[u8]) -> bool {
    (0..bits as usize).all(|i| {
        let bit = |b: &[u8]| b.get(i / 8).map(|byte| (byte >> (7 - i % 8)) & 1);
        matches!((bit(value), bit(prefix)), (Some(a), Some(b)) if a == b)
    })
}
