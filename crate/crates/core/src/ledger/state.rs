//! Validation rules and derived indexes over a ledger prefix.
//!
//! The same state machine backs the authoritative ledger, every AP replica
//! and the audit replayer, so a decision reproduced from a ledger prefix sees
//! exactly what the deciding party saw.

use std::collections::BTreeMap;

use crate::crypto::{Domain, KeyId};
use crate::wire::signature_bytes;
use crate::PublicKey;

use super::entry::{
    Certificate, KeyPurpose, KeyRecord, LedgerConfig, LedgerEntry, Payload, ReusePolicy, Role, Submission,
    TokenTransfer,
};
use super::LedgerError;

#[derive(Debug, Clone)]
pub struct RegisteredKey {
    pub key_id: KeyId,
    pub record: KeyRecord,
    pub public: PublicKey,
    pub seq: u64,
    pub registered_tick: u64,
    pub revoked_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyStatus {
    Active,
    Unknown,
    /// Registered after the queried sequence number.
    NotYetRegistered,
    Revoked { seq: u64 },
    Expired { expiry_tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevocationStatus {
    Valid,
    RevokedOne { seq: u64 },
    RevokedAll { seq: u64 },
}

impl RevocationStatus {
    pub fn is_valid(self) -> bool {
        self == RevocationStatus::Valid
    }

    pub fn name(self) -> &'static str {
        match self {
            RevocationStatus::Valid => "valid",
            RevocationStatus::RevokedOne { .. } => "revoked-one",
            RevocationStatus::RevokedAll { .. } => "revoked-all",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CertRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub cert: Certificate,
    pub revoked_one_at: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct LedgerState {
    config: LedgerConfig,
    genesis: PublicKey,
    genesis_id: KeyId,
    next_seq: u64,
    last_tick: u64,
    keys: BTreeMap<KeyId, RegisteredKey>,
    certs: BTreeMap<u64, CertRecord>,
    certs_by_signer: BTreeMap<KeyId, Vec<u64>>,
    cert_by_value: BTreeMap<(KeyId, Vec<u8>), u64>,
    presented: BTreeMap<Vec<u8>, Vec<u64>>,
    balances: BTreeMap<KeyId, u64>,
    total_issued: u64,
    spent: BTreeMap<KeyId, u64>,
}

impl LedgerState {
    pub fn new(config: LedgerConfig) -> Result<Self, LedgerError> {
        let genesis =
            PublicKey::from_bytes(&config.genesis_authority).map_err(|_| LedgerError::BadGenesisKey)?;
        Ok(LedgerState {
            genesis_id: genesis.key_id(),
            genesis,
            config,
            next_seq: 0,
            last_tick: 0,
            keys: BTreeMap::new(),
            certs: BTreeMap::new(),
            certs_by_signer: BTreeMap::new(),
            cert_by_value: BTreeMap::new(),
            presented: BTreeMap::new(),
            balances: BTreeMap::new(),
            total_issued: 0,
            spent: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn genesis_authority(&self) -> KeyId {
        self.genesis_id
    }

    /// Number of entries applied; the next entry gets this sequence number.
    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    pub fn head_seq(&self) -> Option<u64> {
        self.next_seq.checked_sub(1)
    }

    pub fn last_tick(&self) -> u64 {
        self.last_tick
    }

    // ----- queries -------------------------------------------------------

    pub fn key(&self, id: &KeyId) -> Option<&RegisteredKey> {
        self.keys.get(id)
    }

    pub fn keys(&self) -> impl Iterator<Item = &RegisteredKey> {
        self.keys.values()
    }

    /// Registry records in ledger order.
    pub fn keys_in_order(&self) -> Vec<&RegisteredKey> {
        let mut v: Vec<_> = self.keys.values().collect();
        v.sort_by_key(|k| k.seq);
        v
    }

    /// Status of a registered key as of `as_of` (inclusive) at tick `now`.
    pub fn key_status(&self, id: &KeyId, as_of: u64, now: u64) -> KeyStatus {
        let Some(k) = self.keys.get(id) else {
            return KeyStatus::Unknown;
        };
        if k.seq > as_of {
            return KeyStatus::NotYetRegistered;
        }
        if let Some(seq) = k.revoked_at.filter(|s| *s <= as_of) {
            return KeyStatus::Revoked { seq };
        }
        if let Some(expiry_tick) = k.record.expiry_tick.filter(|e| now >= *e) {
            return KeyStatus::Expired { expiry_tick };
        }
        KeyStatus::Active
    }

    fn current_status(&self, id: &KeyId, now: u64) -> KeyStatus {
        match self.head_seq() {
            Some(h) => self.key_status(id, h, now),
            None => KeyStatus::Unknown,
        }
    }

    /// Active keys of one owner and purpose at the current head.
    pub fn active_keys(&self, owner: &str, purpose: KeyPurpose, now: u64) -> Vec<&RegisteredKey> {
        let mut v: Vec<_> = self
            .keys
            .values()
            .filter(|k| k.record.owner == owner && k.record.purpose == purpose)
            .filter(|k| self.current_status(&k.key_id, now) == KeyStatus::Active)
            .collect();
        v.sort_by_key(|k| k.seq);
        v
    }

    pub fn cert(&self, seq: u64) -> Option<&CertRecord> {
        self.certs.get(&seq)
    }

    pub fn certs(&self) -> impl Iterator<Item = &CertRecord> {
        self.certs.values()
    }

    /// Certificates signed by `signer`, in sequence order.
    pub fn certs_by_signer(&self, signer: &KeyId) -> Vec<&CertRecord> {
        self.certs_by_signer
            .get(signer)
            .map(|seqs| seqs.iter().map(|s| &self.certs[s]).collect())
            .unwrap_or_default()
    }

    pub fn cert_for_value(&self, signer: &KeyId, key_value: &[u8]) -> Option<&CertRecord> {
        self.cert_by_value
            .get(&(*signer, key_value.to_vec()))
            .map(|s| &self.certs[s])
    }

    /// Revocation status of the certificate at `cert_seq` as of `as_of`
    /// (inclusive). When both scopes apply, revoke-all is reported.
    pub fn revocation_status(&self, cert_seq: u64, as_of: u64) -> Result<RevocationStatus, LedgerError> {
        let rec = self
            .certs
            .get(&cert_seq)
            .filter(|c| c.seq <= as_of)
            .ok_or(LedgerError::UnknownCertificate(cert_seq))?;
        if let RevocationStatus::RevokedAll { seq } = self.signer_status(&rec.cert.signature.signer, as_of) {
            return Ok(RevocationStatus::RevokedAll { seq });
        }
        Ok(match rec.revoked_one_at.filter(|s| *s <= as_of) {
            Some(seq) => RevocationStatus::RevokedOne { seq },
            None => RevocationStatus::Valid,
        })
    }

    /// Revoke-all status of a signing key as of `as_of`.
    pub fn signer_status(&self, signer: &KeyId, as_of: u64) -> RevocationStatus {
        match self.keys.get(signer).and_then(|k| k.revoked_at).filter(|s| *s <= as_of) {
            Some(seq) => RevocationStatus::RevokedAll { seq },
            None => RevocationStatus::Valid,
        }
    }

    /// Sequence numbers at which `cert_sig` was recorded as presented, up to
    /// and including `as_of`.
    pub fn presentations(&self, cert_sig: &crate::Signature, as_of: u64) -> Vec<u64> {
        self.presented
            .get(&signature_bytes(cert_sig))
            .map(|v| v.iter().copied().filter(|s| *s <= as_of).collect())
            .unwrap_or_default()
    }

    pub fn balance(&self, account: &KeyId) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<KeyId, u64> {
        &self.balances
    }

    pub fn total_issued(&self) -> u64 {
        self.total_issued
    }

    /// Nothing is ever retired; the term is kept so the conservation identity
    /// reads the same as for ledgers that do retire tokens.
    pub fn total_retired(&self) -> u64 {
        0
    }

    pub fn spent_at(&self, note_key: &KeyId) -> Option<u64> {
        self.spent.get(note_key).copied()
    }

    // ----- validation ----------------------------------------------------

    /// Validates `sub` against the current state and, if acceptable, applies
    /// it and returns the stored entry. On error the state is unchanged.
    pub fn apply(&mut self, sub: &Submission, now: u64) -> Result<LedgerEntry, LedgerError> {
        if now < self.last_tick {
            return Err(LedgerError::ClockWentBackwards { last: self.last_tick, now });
        }
        let payload = Payload::decode(&sub.payload).map_err(LedgerError::MalformedPayload)?;
        let author = sub.author_sig.signer;
        let author_public = if author == self.genesis_id {
            &self.genesis
        } else {
            &self.keys.get(&author).ok_or(LedgerError::UnknownAuthor(author))?.public
        };
        if !author_public.verify_in(Domain::LedgerEntry, &sub.payload, &sub.author_sig) {
            return Err(LedgerError::BadAuthorSignature);
        }
        let seq = self.next_seq;
        let effect = self.check(&payload, author, now)?;
        self.commit(seq, now, author, &payload, effect);
        self.next_seq += 1;
        self.last_tick = now;
        Ok(LedgerEntry {
            seq,
            timestamp: now,
            payload,
            author_key_id: author,
            author_sig: sub.author_sig.clone(),
        })
    }

    /// Runs the validation rules for `payload` as if `author` submitted it
    /// now, without changing anything. Signature checks are not included.
    pub fn check_payload(&self, payload: &Payload, author: KeyId, now: u64) -> Result<(), LedgerError> {
        self.check(payload, author, now).map(|_| ())
    }

    /// Re-applies an entry read from another copy of the log.
    pub fn replay(&mut self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        if entry.seq != self.next_seq {
            return Err(LedgerError::SeqMismatch { expected: self.next_seq, found: entry.seq });
        }
        if entry.author_sig.signer != entry.author_key_id {
            return Err(LedgerError::BadAuthorSignature);
        }
        let stored = self.apply(&entry.submission(), entry.timestamp)?;
        debug_assert_eq!(&stored, entry);
        Ok(())
    }

    fn require_active(&self, author: KeyId, purposes: &[KeyPurpose], now: u64) -> Result<&RegisteredKey, LedgerError> {
        let k = self.keys.get(&author).ok_or(LedgerError::UnknownAuthor(author))?;
        if !purposes.contains(&k.record.purpose) {
            return Err(LedgerError::WrongAuthorRole { purpose: k.record.purpose.name() });
        }
        match self.current_status(&author, now) {
            KeyStatus::Active => Ok(k),
            status => Err(LedgerError::InactiveAuthor(format!("{status:?}"))),
        }
    }

    fn check(&self, payload: &Payload, author: KeyId, now: u64) -> Result<Effect, LedgerError> {
        match payload {
            Payload::KeyRegistry(record) => self.check_registration(record, author, now),
            Payload::Certificate(cert) => {
                let signer = self.require_active(author, &[KeyPurpose::Credential], now)?;
                if cert.signature.signer != author {
                    return Err(LedgerError::BadCertificate("certificate signer differs from author"));
                }
                let ok = if self.config.blinded_certificates {
                    signer
                        .public
                        .parse_residue(&cert.key_value)
                        .is_some_and(|v| signer.public.verify_residue(&v, &cert.signature))
                } else {
                    PublicKey::from_bytes(&cert.key_value).is_ok()
                        && signer.public.verify_in(Domain::CredentialKey, &cert.key_value, &cert.signature)
                };
                if !ok {
                    return Err(LedgerError::BadCertificate("signature does not verify over the key value"));
                }
                if let Some(seq) = self.cert_by_value.get(&(author, cert.key_value.clone())) {
                    return Err(LedgerError::DuplicateCertificate { first_seq: *seq });
                }
                Ok(Effect::None)
            }
            Payload::RevokeOne { cert_seq } => {
                if !self.config.allow_revoke_one {
                    return Err(LedgerError::Policy(
                        "revoke-one is disabled on this ledger; only revoke-all is available".into(),
                    ));
                }
                let rec = self.certs.get(cert_seq).ok_or(LedgerError::UnknownCertificate(*cert_seq))?;
                if rec.cert.signature.signer != author {
                    return Err(LedgerError::Policy("only the certifying key may revoke a certificate".into()));
                }
                self.require_active(author, &[KeyPurpose::Credential], now)?;
                if rec.revoked_one_at.is_some() {
                    return Err(LedgerError::AlreadyRevoked);
                }
                Ok(Effect::None)
            }
            Payload::RevokeAll { key_id } => {
                let target = self.keys.get(key_id).ok_or(LedgerError::UnknownKey(*key_id))?;
                match target.record.purpose {
                    KeyPurpose::Credential | KeyPurpose::Token => {}
                    KeyPurpose::Timely => {
                        return Err(LedgerError::Policy("timely keys are irrevocable; they expire".into()))
                    }
                    KeyPurpose::Authorise => {
                        return Err(LedgerError::Policy("revoke-all applies to certification keys only".into()))
                    }
                }
                if target.revoked_at.is_some() {
                    return Err(LedgerError::AlreadyRevoked);
                }
                if author != self.genesis_id {
                    let a = self.keys.get(&author).ok_or(LedgerError::UnknownAuthor(author))?;
                    if a.record.owner != target.record.owner || a.record.role() != Role::Cp {
                        return Err(LedgerError::Policy("a key may only be revoked by its owner".into()));
                    }
                    if author != *key_id {
                        self.require_active(author, &[KeyPurpose::Credential, KeyPurpose::Token], now)?;
                    }
                }
                Ok(Effect::None)
            }
            Payload::TokenIssue { amount } => {
                self.require_active(author, &[KeyPurpose::Token], now)?;
                if *amount == 0 {
                    return Err(LedgerError::ZeroAmount);
                }
                Ok(Effect::None)
            }
            Payload::TokenTransfer(t) => {
                self.require_active(author, &[KeyPurpose::Authorise], now)?;
                self.check_transfer(t, now)
            }
            Payload::PresentedSignature { cert_sig } => {
                self.require_active(author, &[KeyPurpose::Authorise, KeyPurpose::Timely], now)?;
                let previous = self.presented.get(&signature_bytes(cert_sig));
                match (previous.and_then(|v| v.first()), self.config.reuse) {
                    (Some(first), ReusePolicy::Disallow) => {
                        Err(LedgerError::DuplicatePresentation { first_seq: *first })
                    }
                    _ => Ok(Effect::None),
                }
            }
        }
    }

    fn check_registration(&self, record: &KeyRecord, author: KeyId, now: u64) -> Result<Effect, LedgerError> {
        let public = PublicKey::from_bytes(&record.public_key).map_err(|_| LedgerError::BadRegistration("key"))?;
        let id = public.key_id();
        if self.keys.contains_key(&id) || id == self.genesis_id {
            return Err(LedgerError::DuplicateKey(id));
        }
        match record.purpose {
            KeyPurpose::Timely => {
                let expiry = record.expiry_tick.ok_or(LedgerError::BadRegistration("timely key needs expiry"))?;
                if expiry <= now {
                    return Err(LedgerError::BadRegistration("expiry already passed"));
                }
                let overlapping = self.keys.values().any(|k| {
                    k.record.owner == record.owner
                        && k.record.purpose == KeyPurpose::Timely
                        && k.record.expiry_tick.is_some_and(|e| e > now)
                });
                if overlapping {
                    return Err(LedgerError::TimelyOverlap);
                }
            }
            _ if record.expiry_tick.is_some() => {
                return Err(LedgerError::BadRegistration("only timely keys carry an expiry"));
            }
            KeyPurpose::Authorise | KeyPurpose::Token if record.interval.is_some() => {
                return Err(LedgerError::BadRegistration("only credential keys carry an interval"));
            }
            _ => {}
        }
        if author != self.genesis_id {
            let a = self.require_active(author, &[KeyPurpose::Credential, KeyPurpose::Token, KeyPurpose::Authorise], now)?;
            if a.record.owner != record.owner || a.record.role() != record.role() {
                return Err(LedgerError::Policy("keys are registered by the genesis authority or their owner".into()));
            }
        }
        Ok(Effect::Register(Box::new((id, public))))
    }

    fn check_transfer(&self, t: &TokenTransfer, now: u64) -> Result<Effect, LedgerError> {
        let pool = t.cp_sig.signer;
        let cp = self.keys.get(&pool).ok_or(LedgerError::InvalidNote("unknown token key"))?;
        if cp.record.purpose != KeyPurpose::Token {
            return Err(LedgerError::InvalidNote("note not signed by a token key"));
        }
        if self.current_status(&pool, now) != KeyStatus::Active {
            return Err(LedgerError::InvalidNote("token key revoked"));
        }
        if !cp.public.verify_in(Domain::CredentialKey, &t.note_key, &t.cp_sig) {
            return Err(LedgerError::InvalidNote("issuer signature does not verify"));
        }
        let note = PublicKey::from_bytes(&t.note_key).map_err(|_| LedgerError::InvalidNote("note key"))?;
        if !note.verify_in(Domain::Endorsement, t.to.as_bytes(), &t.endorsement) {
            return Err(LedgerError::InvalidEndorsement);
        }
        let note_id = note.key_id();
        if let Some(first_seq) = self.spent.get(&note_id) {
            return Err(LedgerError::DoubleSpend { first_seq: *first_seq });
        }
        if self.balance(&pool) == 0 {
            return Err(LedgerError::InsufficientBalance { account: pool });
        }
        Ok(Effect::Spend(note_id))
    }

    fn commit(&mut self, seq: u64, now: u64, author: KeyId, payload: &Payload, effect: Effect) {
        match (payload, effect) {
            (Payload::KeyRegistry(record), Effect::Register(reg)) => {
                let (key_id, public) = *reg;
                self.keys.insert(
                    key_id,
                    RegisteredKey { key_id, record: record.clone(), public, seq, registered_tick: now, revoked_at: None },
                );
            }
            (Payload::Certificate(cert), _) => {
                let signer = cert.signature.signer;
                self.certs
                    .insert(seq, CertRecord { seq, timestamp: now, cert: cert.clone(), revoked_one_at: None });
                self.certs_by_signer.entry(signer).or_default().push(seq);
                self.cert_by_value.insert((signer, cert.key_value.clone()), seq);
            }
            (Payload::RevokeOne { cert_seq }, _) => {
                self.certs.get_mut(cert_seq).expect("checked").revoked_one_at = Some(seq);
            }
            (Payload::RevokeAll { key_id }, _) => {
                self.keys.get_mut(key_id).expect("checked").revoked_at = Some(seq);
            }
            (Payload::TokenIssue { amount }, _) => {
                *self.balances.entry(author).or_default() += amount;
                self.total_issued += amount;
            }
            (Payload::TokenTransfer(t), Effect::Spend(note_id)) => {
                *self.balances.get_mut(&t.cp_sig.signer).expect("checked") -= 1;
                *self.balances.entry(t.to).or_default() += 1;
                self.spent.insert(note_id, seq);
            }
            (Payload::PresentedSignature { cert_sig }, _) => {
                self.presented.entry(signature_bytes(cert_sig)).or_default().push(seq);
            }
            _ => unreachable!("effect does not match payload"),
        }
    }
}

enum Effect {
    None,
    Register(Box<(KeyId, PublicKey)>),
    Spend(KeyId),
}
