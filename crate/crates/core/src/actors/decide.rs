//! Accept/reject rules as pure functions of a message, a ledger prefix and
//! the deciding party's local memory. Actors call these to decide; the audit
//! explainer calls them again on reconstructed inputs to reproduce each
//! decision.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{check_fresh, proof_signature_valid, Domain, KeyId, OwnershipProof};
use crate::ledger::{
    KeyPurpose, KeyStatus, Ledger, LedgerError, Payload, RegisteredKey, RevocationStatus, TokenTransfer,
};
use crate::wire::Encoder;
use crate::{PublicKey, Signature};

use super::message::{object_message, voucher_message, AuthPayload, ProtocolMessage};
use super::{Settings, Variant};

/// A ledger entry cited in support of a decision.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ChainRef {
    pub label: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: String,
    pub chain: Vec<ChainRef>,
}

impl Verdict {
    fn accept(chain: Vec<ChainRef>) -> Self {
        Verdict { accepted: true, reason: "ok".into(), chain }
    }

    fn reject(reason: &str, chain: Vec<ChainRef>) -> Self {
        Verdict { accepted: false, reason: reason.into(), chain }
    }
}

fn cite(chain: &mut Vec<ChainRef>, label: &str, seq: u64) {
    let r = ChainRef { label: label.into(), seq };
    if !chain.contains(&r) {
        chain.push(r);
    }
}

/// Bytes the AP signs to assert a pairwise identifier to one service.
pub fn assertion_message(identifier: &[u8], service: &str) -> Vec<u8> {
    Encoder::tagged("assert:").bytes(identifier).text(service).finish()
}

/// Looks up a registry key usable for one of `purposes` at the prefix end.
fn registered<'a>(
    ledger: &'a Ledger,
    signer: &KeyId,
    purposes: &[KeyPurpose],
    now: u64,
    chain: &mut Vec<ChainRef>,
) -> Result<&'a RegisteredKey, &'static str> {
    let state = ledger.state();
    let key = state.key(signer).filter(|k| purposes.contains(&k.record.purpose));
    let Some(key) = key else {
        return Err(match purposes.first() {
            Some(KeyPurpose::Credential | KeyPurpose::Token) => "unknown-cp-key",
            _ => "unknown-ap-key",
        });
    };
    cite(chain, "registry", key.seq);
    let as_of = ledger.head_seq().unwrap_or(0);
    match state.key_status(signer, as_of, now) {
        KeyStatus::Active => Ok(key),
        KeyStatus::Revoked { seq } => {
            cite(chain, "revoke-all", seq);
            Err("revoked-credential")
        }
        KeyStatus::Expired { .. } => Err("expired-timely-key"),
        KeyStatus::Unknown | KeyStatus::NotYetRegistered => Err("unknown-ap-key"),
    }
}

// ----- authentication provider -------------------------------------------

/// What the AP knew about the challenge answered by a proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChallengeRecord {
    pub issued_at: Option<u64>,
    pub answered_before: bool,
}

/// Everything an AP decision depends on.
pub struct ApInputs<'a> {
    pub variant: Variant,
    pub settings: &'a Settings,
    pub now: u64,
    /// The AP's replica.
    pub ledger: &'a Ledger,
    pub synced_at: u64,
    /// The AP's own authorise keys, by category.
    pub keys: &'a BTreeMap<String, PublicKey>,
    /// Current timely key, if any.
    pub timely: Option<KeyId>,
    /// Presented certificate signatures not yet written to the ledger.
    pub local_presented: &'a BTreeSet<Vec<u8>>,
    /// Identifiers (V1) or credential keys (V2) the AP accepted at setup.
    pub enrolled: &'a BTreeMap<Vec<u8>, Signature>,
    /// Values revoked by CP push.
    pub pushed_revoked: &'a BTreeSet<Vec<u8>>,
}

/// Outcome of an AP credential check plus the category it vouches for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApVerdict {
    pub verdict: Verdict,
    pub category: Option<String>,
}

impl ApVerdict {
    fn reject(reason: &str, chain: Vec<ChainRef>) -> Self {
        ApVerdict { verdict: Verdict::reject(reason, chain), category: None }
    }
}

/// V2 setup: the user hands over CP-signed keys.
pub fn ap_enroll_certs(inp: &ApInputs, certs: &[(Vec<u8>, Signature)]) -> Verdict {
    let mut chain = Vec::new();
    if certs.is_empty() {
        return Verdict::reject("no-certificate", chain);
    }
    for (key, sig) in certs {
        let signer = match registered(inp.ledger, &sig.signer, &[KeyPurpose::Credential], inp.now, &mut chain) {
            Ok(k) => k,
            Err(r) => return Verdict::reject(r, chain),
        };
        if PublicKey::from_bytes(key).is_err() || !signer.public.verify_in(Domain::CredentialKey, key, sig) {
            return Verdict::reject("bad-certificate", chain);
        }
    }
    Verdict::accept(chain)
}

/// V0/V1: checks a CP-signed user identifier `CP(u)`.
pub fn ap_check_identifier(inp: &ApInputs, identifier: &[u8], sig: &Signature) -> Verdict {
    let mut chain = Vec::new();
    let signer = match registered(inp.ledger, &sig.signer, &[KeyPurpose::Credential], inp.now, &mut chain) {
        Ok(k) => k,
        Err(r) => return Verdict::reject(r, chain),
    };
    if !signer.public.verify_in(Domain::Identifier, identifier, sig) {
        return Verdict::reject("bad-signature", chain);
    }
    Verdict::accept(chain)
}

/// V1 operating phase: the user asks for an assertion by its identifier.
pub fn ap_assert_enrolled(inp: &ApInputs, identifier: &[u8], sig: &Signature) -> Verdict {
    match inp.enrolled.get(identifier) {
        Some(known) if known == sig => {}
        _ => return Verdict::reject("unknown-account", vec![]),
    }
    if inp.pushed_revoked.contains(identifier) {
        return Verdict::reject("revoked-credential", vec![]);
    }
    ap_check_identifier(inp, identifier, sig)
}

/// V2-V4: ownership proof, certificate, revocation and reuse checks ahead of
/// signing a blinded nonce or one-time id.
pub fn ap_authorize(
    inp: &ApInputs,
    challenge: ChallengeRecord,
    proof: Option<&OwnershipProof>,
    key: &[u8],
    cert: Option<&Signature>,
    payload: &AuthPayload,
) -> ApVerdict {
    let mut chain = Vec::new();
    let offline = matches!(payload, AuthPayload::OneTimeId(_));
    if offline && inp.now.saturating_sub(inp.synced_at) > inp.settings.max_lag {
        return ApVerdict::reject("stale-cursor", chain);
    }
    let Ok(public) = PublicKey::from_bytes(key) else {
        return ApVerdict::reject("malformed-key", chain);
    };

    let category = if inp.variant == Variant::V2 {
        let Some(cert) = inp.enrolled.get(key) else {
            return ApVerdict::reject("unknown-credential", chain);
        };
        if inp.pushed_revoked.contains(key) {
            return ApVerdict::reject("revoked-credential", chain);
        }
        match registered(inp.ledger, &cert.signer, &[KeyPurpose::Credential], inp.now, &mut chain) {
            Ok(k) => k.record.category.clone(),
            Err(r) => return ApVerdict::reject(r, chain),
        }
    } else {
        let Some(proof) = proof else {
            return ApVerdict::reject("bad-ownership-proof", chain);
        };
        let Some(issued_at) = challenge.issued_at else {
            return ApVerdict::reject("unknown-challenge", chain);
        };
        if challenge.answered_before {
            return ApVerdict::reject("replayed-challenge", chain);
        }
        if check_fresh(issued_at, inp.now, inp.settings.challenge_window).is_err() {
            return ApVerdict::reject("stale-challenge", chain);
        }
        if !proof_signature_valid(&public, proof) {
            return ApVerdict::reject("bad-ownership-proof", chain);
        }
        let Some(cert) = cert else {
            return ApVerdict::reject("no-certificate", chain);
        };
        let state = inp.ledger.state();
        let Some(signer) = state.key(&cert.signer).filter(|k| k.record.purpose == KeyPurpose::Credential) else {
            return ApVerdict::reject("unknown-cp-key", chain);
        };
        cite(&mut chain, "registry", signer.seq);
        let as_of = inp.ledger.head_seq().unwrap_or(0);
        if inp.variant.blinded_certs() {
            if !signer.public.verify_in(Domain::CredentialKey, key, cert) {
                return ApVerdict::reject("bad-certificate", chain);
            }
            if let RevocationStatus::RevokedAll { seq } = state.signer_status(&cert.signer, as_of) {
                cite(&mut chain, "revoke-all", seq);
                return ApVerdict::reject("revoked-credential", chain);
            }
            let on_ledger = state.presentations(cert, as_of);
            let local = inp.local_presented.contains(&crate::wire::signature_bytes(cert));
            for s in &on_ledger {
                cite(&mut chain, "presented", *s);
            }
            if (local || !on_ledger.is_empty()) && inp.settings.reuse == crate::ledger::ReusePolicy::Disallow {
                return ApVerdict::reject("duplicate-presentation", chain);
            }
        } else {
            let Some(rec) = state.cert_for_value(&cert.signer, key) else {
                return ApVerdict::reject("no-certificate", chain);
            };
            cite(&mut chain, "certificate", rec.seq);
            if rec.cert.signature != *cert {
                return ApVerdict::reject("bad-certificate", chain);
            }
            match state.revocation_status(rec.seq, as_of) {
                Ok(RevocationStatus::Valid) => {}
                Ok(RevocationStatus::RevokedAll { seq }) => {
                    cite(&mut chain, "revoke-all", seq);
                    return ApVerdict::reject("revoked-credential", chain);
                }
                Ok(RevocationStatus::RevokedOne { seq }) => {
                    cite(&mut chain, "revoke-one", seq);
                    return ApVerdict::reject("revoked-credential", chain);
                }
                Err(_) => return ApVerdict::reject("no-certificate", chain),
            }
        }
        signer.record.category.clone()
    };

    let Some(ap_key) = inp.keys.get(&category) else {
        return ApVerdict::reject("unsupported-category", chain);
    };
    match payload {
        AuthPayload::BlindedNonce(b) => {
            if ap_key.parse_residue(b).is_none() {
                return ApVerdict::reject("malformed-request", chain);
            }
        }
        AuthPayload::OneTimeId(_) => {
            let Some(t) = inp.timely else {
                return ApVerdict::reject("no-timely-key", chain);
            };
            if let Err(r) = registered(inp.ledger, &t, &[KeyPurpose::Timely], inp.now, &mut chain) {
                return ApVerdict::reject(if r == "expired-timely-key" { "no-timely-key" } else { r }, chain);
            }
        }
    }
    ApVerdict { verdict: Verdict::accept(chain), category: Some(category) }
}

/// V5: validates a token transfer against the replica the AP will write to.
pub fn ap_spend(inp: &ApInputs, author: KeyId, transfer: &TokenTransfer) -> Verdict {
    let mut chain = Vec::new();
    let state = inp.ledger.state();
    if let Some(k) = state.key(&transfer.cp_sig.signer) {
        cite(&mut chain, "registry", k.seq);
    }
    if let Some(note) = PublicKey::from_bytes(&transfer.note_key).ok().map(|k| k.key_id()) {
        if let Some(seq) = state.spent_at(&note) {
            cite(&mut chain, "spent", seq);
        }
    }
    match state.check_payload(&Payload::TokenTransfer(transfer.clone()), author, inp.now) {
        Ok(()) => Verdict::accept(chain),
        Err(e) => Verdict::reject(spend_reason(&e), chain),
    }
}

pub fn spend_reason(e: &LedgerError) -> &'static str {
    match e {
        LedgerError::DoubleSpend { .. } => "double-spend",
        LedgerError::InvalidEndorsement => "invalid-endorsement",
        LedgerError::InsufficientBalance { .. } => "insufficient-balance",
        LedgerError::InvalidNote(_) => "invalid-note",
        _ => "ledger-rejected",
    }
}

// ----- service provider --------------------------------------------------

/// Everything a service decision depends on.
pub struct ServiceInputs<'a> {
    pub service: &'a str,
    pub policy: &'a str,
    pub now: u64,
    pub ledger: &'a Ledger,
    /// Unconsumed nonce this service issued on the presentation's channel.
    pub issued_nonce: Option<[u8; 32]>,
    pub accepted_ids: &'a BTreeSet<[u8; 32]>,
    pub accepted_receipts: &'a BTreeSet<u64>,
}

pub fn service_accept(inp: &ServiceInputs, msg: &ProtocolMessage) -> Verdict {
    let mut chain = Vec::new();
    let authorise = [KeyPurpose::Authorise];
    macro_rules! ap_key {
        ($signer:expr, $purposes:expr) => {
            match registered(inp.ledger, $signer, $purposes, inp.now, &mut chain) {
                Ok(k) => k,
                Err(r) => return Verdict::reject(r, chain),
            }
        };
    }
    match msg {
        ProtocolMessage::Assertion { identifier, sig, service } => {
            let k = ap_key!(&sig.signer, &authorise);
            if !k.public.verify_in(Domain::Identifier, &assertion_message(identifier, service), sig) {
                return Verdict::reject("bad-signature", chain);
            }
            if service != inp.service {
                return Verdict::reject("wrong-service", chain);
            }
            if k.record.category != inp.policy {
                return Verdict::reject("wrong-category", chain);
            }
            Verdict::accept(chain)
        }
        ProtocolMessage::Authorization { nonce, sig } => {
            if inp.issued_nonce != Some(*nonce) {
                return Verdict::reject("unknown-nonce", chain);
            }
            let k = ap_key!(&sig.signer, &authorise);
            if !k.public.verify_in(Domain::Nonce, nonce, sig) {
                return Verdict::reject("bad-signature", chain);
            }
            if k.record.category != inp.policy {
                return Verdict::reject("wrong-category", chain);
            }
            Verdict::accept(chain)
        }
        ProtocolMessage::Voucher(v) => {
            let k = ap_key!(&v.sig.signer, &[KeyPurpose::Timely]);
            if k.record.expiry_tick != Some(v.expiry_tick) {
                return Verdict::reject("bad-signature", chain);
            }
            if inp.now >= v.expiry_tick {
                return Verdict::reject("expired-timely-key", chain);
            }
            let m = voucher_message(&v.one_time_id, &v.category, v.expiry_tick);
            if !k.public.verify_in(Domain::Voucher, &m, &v.sig) {
                return Verdict::reject("bad-signature", chain);
            }
            if v.category != inp.policy {
                return Verdict::reject("wrong-category", chain);
            }
            if inp.accepted_ids.contains(&v.one_time_id) {
                return Verdict::reject("duplicate-one-time-id", chain);
            }
            Verdict::accept(chain)
        }
        ProtocolMessage::SignedReceipt { receipt, sig } => {
            let k = ap_key!(&sig.signer, &authorise);
            if !k.public.verify_in(Domain::Receipt, &receipt.encode(), sig) {
                return Verdict::reject("bad-signature", chain);
            }
            if let Err(r) = check_transfer_receipt(inp, receipt, &mut chain) {
                return Verdict::reject(r, chain);
            }
            if inp.accepted_receipts.contains(&receipt.entry_seq) {
                return Verdict::reject("duplicate-receipt", chain);
            }
            Verdict::accept(chain)
        }
        ProtocolMessage::Object { one_time_id, receipt, sig } => {
            let k = ap_key!(&sig.signer, &authorise);
            if !k.public.verify_in(Domain::Object, &object_message(one_time_id, receipt), sig) {
                return Verdict::reject("bad-signature", chain);
            }
            if let Err(r) = check_transfer_receipt(inp, receipt, &mut chain) {
                return Verdict::reject(r, chain);
            }
            if inp.accepted_ids.contains(one_time_id) {
                return Verdict::reject("duplicate-one-time-id", chain);
            }
            if inp.accepted_receipts.contains(&receipt.entry_seq) {
                return Verdict::reject("duplicate-receipt", chain);
            }
            Verdict::accept(chain)
        }
        _ => Verdict::reject("unexpected-message", chain),
    }
}

fn check_transfer_receipt(
    inp: &ServiceInputs,
    receipt: &crate::ledger::Receipt,
    chain: &mut Vec<ChainRef>,
) -> Result<(), &'static str> {
    if !inp.ledger.verify_receipt(receipt) {
        return Err("bad-receipt");
    }
    let entry = inp.ledger.entry(receipt.entry_seq).ok_or("bad-receipt")?;
    let Payload::TokenTransfer(t) = &entry.payload else {
        return Err("bad-receipt");
    };
    cite(chain, "token-transfer", entry.seq);
    if t.to != super::service_account(inp.service) {
        return Err("wrong-account");
    }
    let issuer = inp.ledger.state().key(&t.cp_sig.signer).ok_or("unknown-cp-key")?;
    cite(chain, "registry", issuer.seq);
    if issuer.record.category != inp.policy {
        return Err("wrong-category");
    }
    Ok(())
}
