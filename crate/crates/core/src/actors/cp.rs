//! Certification provider: identity checks, credential issuance, interval
//! publication and revocation.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{open, sha256, Domain, KeyId, ParamSet};
use crate::ledger::{Certificate, KeyPurpose, KeyRecord, Payload, Submission};
use crate::{BlindedMessage, KeyPair, PublicKey, Signature};

use super::decide::Verdict;
use super::message::ProtocolMessage;
use super::{identity_digest, parse_identity, Decision, DecisionKind, Envelope, Io, PartyId, Settings, Variant};

/// What a CP remembers about one enrolled identity.
#[derive(Debug, Clone, Default)]
struct Enrolment {
    identifier: Option<Vec<u8>>,
    keys: Vec<Vec<u8>>,
    cert_seqs: Vec<u64>,
}

/// Revocation request issued by the scenario driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevokeScope {
    /// Every credential in a category: the token key, every interval key,
    /// or only `CP_i` when `interval` is given.
    All { category: String, interval: Option<u64> },
    /// One credential of one user; `slot` indexes that user's credentials in
    /// enrolment order.
    One { user: String, slot: usize },
}

pub struct CertProvider {
    pub id: PartyId,
    variant: Variant,
    settings: Settings,
    intake: KeyPair,
    /// Credential keys per category; in V4 the index is the interval.
    credential: BTreeMap<String, Vec<KeyPair>>,
    token: BTreeMap<String, KeyPair>,
    allowed: BTreeSet<String>,
    revoked_identities: BTreeSet<String>,
    /// Interval -> (category, blinded key) awaiting publication.
    schedule: BTreeMap<u64, Vec<(String, Vec<u8>)>>,
    enrolments: BTreeMap<String, Enrolment>,
    pending_push: Vec<Vec<u8>>,
    push_targets: Vec<PartyId>,
}

impl CertProvider {
    /// Generates the intake key and one credential key per category (one
    /// per category and interval in V4, one token key per category in V5).
    pub fn new(
        id: &str,
        variant: Variant,
        settings: Settings,
        seed: &[u8],
        params: ParamSet,
        categories: &[String],
        intervals: u64,
    ) -> Result<Self, crate::CryptoError> {
        let sub = |label: &str| [seed, b"/", label.as_bytes()].concat();
        let intake = KeyPair::generate(&sub("intake"), params)?;
        let mut credential = BTreeMap::new();
        let mut token = BTreeMap::new();
        for c in categories {
            if variant.tokens() {
                token.insert(c.clone(), KeyPair::generate(&sub(&format!("token/{c}")), params)?);
            } else {
                let n = if variant.blinded_certs() { intervals.max(1) } else { 1 };
                let keys = (0..n)
                    .map(|i| KeyPair::generate(&sub(&format!("credential/{c}/{i}")), params))
                    .collect::<Result<Vec<_>, _>>()?;
                credential.insert(c.clone(), keys);
            }
        }
        Ok(CertProvider {
            id: id.to_string(),
            variant,
            settings,
            intake,
            credential,
            token,
            allowed: BTreeSet::new(),
            revoked_identities: BTreeSet::new(),
            schedule: BTreeMap::new(),
            enrolments: BTreeMap::new(),
            pending_push: Vec::new(),
            push_targets: Vec::new(),
        })
    }

    /// Identities that pass the simulated identity check.
    pub fn allow_identity(&mut self, user: &str) {
        self.allowed.insert(user.to_string());
    }

    /// APs that receive pushed revocations (pre-ledger variants).
    pub fn add_push_target(&mut self, ap: &str) {
        self.push_targets.push(ap.to_string());
    }

    pub fn intake_public(&self) -> &PublicKey {
        &self.intake.public
    }

    pub fn categories(&self) -> Vec<String> {
        self.credential.keys().chain(self.token.keys()).cloned().collect()
    }

    /// Registry records for every signing key, in a fixed order.
    pub fn registrations(&self) -> Vec<KeyRecord> {
        let mut out = Vec::new();
        for (category, keys) in &self.credential {
            for (i, k) in keys.iter().enumerate() {
                out.push(KeyRecord {
                    owner: self.id.clone(),
                    purpose: KeyPurpose::Credential,
                    category: category.clone(),
                    public_key: k.public.to_bytes(),
                    interval: self.variant.blinded_certs().then_some(i as u64),
                    expiry_tick: None,
                });
            }
        }
        for (category, k) in &self.token {
            out.push(KeyRecord {
                owner: self.id.clone(),
                purpose: KeyPurpose::Token,
                category: category.clone(),
                public_key: k.public.to_bytes(),
                interval: None,
                expiry_tick: None,
            });
        }
        out
    }

    /// Private key material, for the view-soundness scan.
    pub fn credential_key(&self, category: &str, interval: u64) -> Option<&KeyPair> {
        self.credential.get(category)?.get(interval as usize)
    }

    fn category_key(&self, category: &str) -> Option<&KeyPair> {
        self.credential.get(category).and_then(|v| v.first())
    }

    pub fn handle(&mut self, io: &mut dyn Io, env: &Envelope) {
        match &env.msg {
            ProtocolMessage::Identify { sealed, keys, intervals, category, .. } => {
                let identity = open(&self.intake, sealed).ok().and_then(|p| parse_identity(&p));
                if let Some(user) = &identity {
                    io.observe(&self.id, identity_digest(user));
                }
                let verdict = match &identity {
                    Some(u) if self.allowed.contains(u) && !self.revoked_identities.contains(u) => {
                        self.check_keys(keys, intervals, category)
                    }
                    _ => Verdict { accepted: false, reason: "identity-rejected".into(), chain: vec![] },
                };
                io.decide(Decision {
                    party: self.id.clone(),
                    kind: DecisionKind::CpIdentify,
                    input: io.current_event(),
                    as_of: io.ledger().read(|l| l.head_seq()),
                    synced_at: io.now(),
                    verdict: verdict.clone(),
                });
                if !verdict.accepted {
                    io.send(&self.id, &env.from, env.task, env.channel, 0, ProtocolMessage::Rejected { reason: verdict.reason });
                    return;
                }
                let user = identity.expect("accepted identity");
                self.enrol(io, env, &user, keys, intervals, category);
            }
            other => {
                let reason = format!("unexpected {}", other.kind());
                io.send(&self.id, &env.from, env.task, env.channel, 0, ProtocolMessage::Rejected { reason });
            }
        }
    }

    fn check_keys(&self, keys: &[Vec<u8>], intervals: &[u64], category: &str) -> Verdict {
        let bad = |r: &str| Verdict { accepted: false, reason: r.into(), chain: vec![] };
        let ok = Verdict { accepted: true, reason: "ok".into(), chain: vec![] };
        match self.variant {
            Variant::V0 | Variant::V1 => {
                if self.category_key(category).is_none() {
                    return bad("unknown-category");
                }
                ok
            }
            Variant::V2 | Variant::V3 | Variant::V3Off => {
                if self.category_key(category).is_none() {
                    return bad("unknown-category");
                }
                if keys.is_empty() || keys.iter().any(|k| PublicKey::from_bytes(k).is_err()) {
                    return bad("malformed-enrollment");
                }
                ok
            }
            Variant::V4 | Variant::V4Off => {
                let Some(interval_keys) = self.credential.get(category) else {
                    return bad("unknown-category");
                };
                if keys.is_empty() || keys.len() != intervals.len() {
                    return bad("malformed-enrollment");
                }
                for (k, i) in keys.iter().zip(intervals) {
                    match interval_keys.get(*i as usize) {
                        Some(cp_i) if cp_i.public.parse_residue(k).is_some() => {}
                        _ => return bad("malformed-enrollment"),
                    }
                }
                ok
            }
            Variant::V5 | Variant::V5Off => {
                let Some(t) = self.token.get(category) else {
                    return bad("unknown-category");
                };
                if keys.is_empty() || keys.iter().any(|k| t.public.parse_residue(k).is_none()) {
                    return bad("malformed-enrollment");
                }
                ok
            }
        }
    }

    fn identifier_for(&self, user: &str) -> Vec<u8> {
        sha256(&[b"user-id:", self.id.as_bytes(), b"/", user.as_bytes()]).to_vec()
    }

    fn enrol(&mut self, io: &mut dyn Io, env: &Envelope, user: &str, keys: &[Vec<u8>], intervals: &[u64], category: &str) {
        let me = self.id.clone();
        let reply = |io: &mut dyn Io, step: u8, msg: ProtocolMessage| io.send(&me, &env.from, env.task, env.channel, step, msg);
        match self.variant {
            Variant::V0 | Variant::V1 => {
                let u = self.identifier_for(user);
                let sig = self.category_key(category).expect("checked").sign_in(Domain::Identifier, &u).expect("non-empty");
                self.enrolments.entry(user.to_string()).or_default().identifier = Some(u.clone());
                let step = if self.variant == Variant::V0 { 4 } else { 3 };
                reply(io, step, ProtocolMessage::Issued { identifier: u, sig });
            }
            Variant::V2 => {
                let key = self.category_key(category).expect("checked");
                let certs: Vec<(Vec<u8>, Signature)> = keys
                    .iter()
                    .map(|k| (k.clone(), key.sign_in(Domain::CredentialKey, k).expect("non-empty")))
                    .collect();
                self.enrolments.entry(user.to_string()).or_default().keys.extend(keys.iter().cloned());
                reply(io, 2, ProtocolMessage::Certificates { certs });
            }
            Variant::V3 | Variant::V3Off => {
                let key = self.category_key(category).expect("checked").clone();
                let mut seqs = Vec::new();
                for k in keys {
                    let signature = key.sign_in(Domain::CredentialKey, k).expect("non-empty");
                    let payload = Payload::Certificate(Certificate { key_value: k.clone(), signature });
                    match io.append(&self.id, env.task, 2, &Submission::new(&payload, &key)) {
                        Ok(r) => seqs.push(r.entry_seq),
                        Err(e) => {
                            reply(io, 0, ProtocolMessage::Rejected { reason: format!("ledger: {e}") });
                            return;
                        }
                    }
                }
                let e = self.enrolments.entry(user.to_string()).or_default();
                e.keys.extend(keys.iter().cloned());
                e.cert_seqs.extend(seqs);
                reply(io, 0, ProtocolMessage::Outcome { accepted: true, reason: "certified".into() });
            }
            Variant::V4 | Variant::V4Off => {
                for (k, i) in keys.iter().zip(intervals) {
                    self.schedule.entry(*i).or_default().push((category.to_string(), k.clone()));
                }
                self.enrolments.entry(user.to_string()).or_default().keys.extend(keys.iter().cloned());
                reply(io, 0, ProtocolMessage::Outcome { accepted: true, reason: "scheduled".into() });
            }
            Variant::V5 | Variant::V5Off => {
                let key = self.token[category].clone();
                let payload = Payload::TokenIssue { amount: keys.len() as u64 };
                if let Err(e) = io.append(&self.id, env.task, 3, &Submission::new(&payload, &key)) {
                    reply(io, 0, ProtocolMessage::Rejected { reason: format!("ledger: {e}") });
                    return;
                }
                let notes = keys
                    .iter()
                    .map(|k| {
                        let blinded = BlindedMessage::from_bytes(k, &key.public).expect("checked");
                        (k.clone(), key.sign_blinded(&blinded).expect("same key"))
                    })
                    .collect();
                self.enrolments.entry(user.to_string()).or_default().keys.extend(keys.iter().cloned());
                reply(io, 4, ProtocolMessage::TokenNotes { notes });
            }
        }
    }

    /// End-of-tick work: publish interval certificates that are due and push
    /// queued revocations.
    pub fn end_of_tick(&mut self, io: &mut dyn Io) {
        let now = io.now();
        if self.variant.blinded_certs() {
            let due: Vec<u64> = self
                .schedule
                .keys()
                .copied()
                .filter(|i| i.saturating_mul(self.settings.interval_ticks) <= now)
                .collect();
            for i in due {
                let mut batch = self.schedule.remove(&i).unwrap_or_default();
                batch.sort();
                for (category, blinded) in batch {
                    let key = self.credential[&category][i as usize].clone();
                    let b = BlindedMessage::from_bytes(&blinded, &key.public).expect("checked at enrolment");
                    let signature = key.sign_blinded(&b).expect("same key");
                    let payload = Payload::Certificate(Certificate { key_value: blinded, signature });
                    // A failure here means the interval key was revoked; the
                    // certificate is simply not published.
                    let _ = io.append(&self.id, None, 2, &Submission::new(&payload, &key));
                }
            }
        }
        if self.variant.push_revocation() && !self.pending_push.is_empty() {
            let revoked = std::mem::take(&mut self.pending_push);
            for ap in self.push_targets.clone() {
                let ch = io.new_channel();
                io.send(&self.id, &ap, None, ch, 0, ProtocolMessage::RevocationPush { revoked: revoked.clone() });
            }
        }
    }

    /// Carries out a revocation. Ledger variants write to the ledger; the
    /// baselines and V2 queue a push to their APs.
    pub fn revoke(&mut self, io: &mut dyn Io, scope: &RevokeScope) -> Result<(), String> {
        match (self.variant, scope) {
            (Variant::V0, RevokeScope::One { user, .. }) => {
                self.revoked_identities.insert(user.clone());
                Ok(())
            }
            (Variant::V0, RevokeScope::All { .. }) => {
                self.revoked_identities.extend(self.allowed.iter().cloned());
                Ok(())
            }
            (Variant::V1, RevokeScope::One { user, .. }) => {
                let id = self.enrolments.get(user).and_then(|e| e.identifier.clone()).ok_or("unknown user")?;
                self.revoked_identities.insert(user.clone());
                self.pending_push.push(id);
                Ok(())
            }
            (Variant::V1, RevokeScope::All { .. }) => {
                let ids: Vec<_> = self.enrolments.values().filter_map(|e| e.identifier.clone()).collect();
                self.revoked_identities.extend(self.enrolments.keys().cloned());
                self.pending_push.extend(ids);
                Ok(())
            }
            (Variant::V2, RevokeScope::One { user, slot }) => {
                let key = self.enrolments.get(user).and_then(|e| e.keys.get(*slot).cloned()).ok_or("unknown credential")?;
                self.pending_push.push(key);
                Ok(())
            }
            (Variant::V2, RevokeScope::All { .. }) => {
                let keys: Vec<_> = self.enrolments.values().flat_map(|e| e.keys.clone()).collect();
                self.pending_push.extend(keys);
                Ok(())
            }
            (_, RevokeScope::All { category, interval }) => {
                let keys: Vec<KeyPair> = if self.variant.tokens() {
                    self.token.get(category).cloned().into_iter().collect()
                } else {
                    let v = self.credential.get(category).cloned().unwrap_or_default();
                    match interval {
                        Some(i) => v.get(*i as usize).cloned().into_iter().collect(),
                        None => v,
                    }
                };
                if keys.is_empty() {
                    return Err(format!("no key for category {category:?}"));
                }
                for key in keys {
                    let payload = Payload::RevokeAll { key_id: key.key_id };
                    io.append(&self.id, None, 0, &Submission::new(&payload, &key)).map_err(|e| e.to_string())?;
                }
                Ok(())
            }
            (_, RevokeScope::One { user, slot }) => {
                let e = self.enrolments.get(user).ok_or("unknown user")?;
                let (seq, author) = if self.variant.blinded_certs() {
                    // The CP knows which blinded certificate it issued to the
                    // user; the ledger decides whether it may be targeted.
                    let blinded = e.keys.get(*slot).ok_or("unknown credential")?;
                    let found = io.ledger().read(|l| {
                        l.state().certs().find(|c| &c.cert.key_value == blinded).map(|c| (c.seq, c.cert.signature.signer))
                    });
                    found.ok_or("credential not yet published")?
                } else {
                    let seq = *e.cert_seqs.get(*slot).ok_or("unknown credential")?;
                    let signer = io.ledger().read(|l| l.state().cert(seq).map(|c| c.cert.signature.signer));
                    (seq, signer.ok_or("unknown credential")?)
                };
                let key = self.key_by_id(&author).ok_or("signing key not held")?.clone();
                let payload = Payload::RevokeOne { cert_seq: seq };
                io.append(&self.id, None, 0, &Submission::new(&payload, &key)).map(|_| ()).map_err(|e| e.to_string())
            }
        }
    }

    fn key_by_id(&self, id: &KeyId) -> Option<&KeyPair> {
        self.credential.values().flatten().chain(self.token.values()).find(|k| k.key_id == *id)
    }

    /// Number of blinded keys still waiting for their interval.
    pub fn scheduled(&self) -> usize {
        self.schedule.values().map(Vec::len).sum()
    }
}
