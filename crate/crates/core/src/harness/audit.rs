//! Audit explainer: rebuilds each recorded decision's inputs from the
//! transcript and the ledger prefix it was made against, reruns the
//! decision rule, and compares the result with what was recorded.

use std::collections::{BTreeMap, BTreeSet};

use crate::actors::decide::{
    ap_assert_enrolled, ap_authorize, ap_check_identifier, ap_enroll_certs, ap_spend, service_accept, ApInputs,
    ChallengeRecord, ServiceInputs,
};
use crate::actors::{DecisionKind, ProtocolMessage, Variant, Verdict};
use crate::ledger::{KeyPurpose, Ledger, TokenTransfer};
use crate::wire::signature_bytes;
use crate::{PublicKey, Signature};

use super::transcript::{render_chain, DecisionRecord, Event, Transcript};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditStatus {
    /// Replay reproduced the recorded verdict exactly.
    Match,
    Mismatch(Verdict),
    /// Decisions that depend on off-ledger identity checks.
    NotAuditable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditLine {
    pub record: DecisionRecord,
    pub status: AuditStatus,
}

impl AuditLine {
    pub fn matches(&self) -> bool {
        !matches!(self.status, AuditStatus::Mismatch(_))
    }

    /// Human-readable explanation with ledger references.
    pub fn explain(&self, t: &Transcript) -> String {
        let d = &self.record.decision;
        let v = &d.verdict;
        let mut out = format!(
            "decision {} tick {} {} {}: {} ({})\n",
            self.record.idx,
            self.record.tick,
            d.party,
            d.kind.name(),
            if v.accepted { "accepted" } else { "rejected" },
            v.reason
        );
        let input = t.event(d.input).map_or("?".to_string(), |e| format!("{} from {}", e.msg.kind(), e.from));
        out.push_str(&format!("  input event {} ({input})\n", d.input));
        out.push_str(&format!(
            "  ledger prefix as_of={} synced_at={}\n",
            d.as_of.map_or("-".into(), |s| s.to_string()),
            d.synced_at
        ));
        for c in &v.chain {
            let kind = t.ledger.get(c.seq as usize).map_or("?".to_string(), |e| e.kind().to_string());
            out.push_str(&format!("  cites {} seq {} ({kind})\n", c.label, c.seq));
        }
        out.push_str(&match &self.status {
            AuditStatus::Match => "  replay: match\n".to_string(),
            AuditStatus::NotAuditable => "  replay: not auditable (identity check happens off-ledger)\n".to_string(),
            AuditStatus::Mismatch(r) => format!(
                "  replay: MISMATCH, replay gave {} ({}) chain={}\n",
                if r.accepted { "accepted" } else { "rejected" },
                r.reason,
                render_chain(&r.chain)
            ),
        });
        out
    }
}

/// Audits every decision, or only the one at `only`.
pub fn audit(t: &Transcript, only: Option<u64>) -> Result<Vec<AuditLine>, HarnessError> {
    if let Some(idx) = only {
        if idx >= t.len() {
            return Err(HarnessError::Analysis(format!("event {idx} is out of range (transcript has {})", t.len())));
        }
        if t.decision(idx).is_none() {
            return Err(HarnessError::Analysis(format!("event {idx} is not a decision")));
        }
    }
    let full = t.ledger()?;
    let mut prefixes: BTreeMap<Option<u64>, Ledger> = BTreeMap::new();
    let mut out = Vec::new();
    for d in t.decisions() {
        if only.is_some_and(|i| i != d.idx) {
            continue;
        }
        if !d.decision.kind.auditable() {
            out.push(AuditLine { record: d.clone(), status: AuditStatus::NotAuditable });
            continue;
        }
        let prefix = prefixes.entry(d.decision.as_of).or_insert_with(|| full.prefix(d.decision.as_of));
        let replay = replay(t, d, prefix)?;
        let status = if replay == d.decision.verdict { AuditStatus::Match } else { AuditStatus::Mismatch(replay) };
        out.push(AuditLine { record: d.clone(), status });
    }
    Ok(out)
}

fn input_event<'a>(t: &'a Transcript, d: &DecisionRecord) -> Result<&'a Event, HarnessError> {
    t.event(d.decision.input)
        .ok_or_else(|| HarnessError::Analysis(format!("decision {} cites missing event {}", d.idx, d.decision.input)))
}

fn earlier<'a>(t: &'a Transcript, d: &'a DecisionRecord) -> impl Iterator<Item = &'a DecisionRecord> + 'a {
    t.decisions().filter(move |o| o.idx < d.idx && o.decision.party == d.decision.party)
}

/// AP memory reconstructed from the transcript up to `d`.
struct ApMemory {
    keys: BTreeMap<String, PublicKey>,
    timely: Option<crate::KeyId>,
    local_presented: BTreeSet<Vec<u8>>,
    enrolled: BTreeMap<Vec<u8>, Signature>,
    pushed_revoked: BTreeSet<Vec<u8>>,
}

fn ap_memory(t: &Transcript, d: &DecisionRecord, ledger: &Ledger) -> ApMemory {
    let me = &d.decision.party;
    let state = ledger.state();
    let mut keys = BTreeMap::new();
    let mut timely = None;
    for k in state.keys_in_order() {
        if &k.record.owner != me {
            continue;
        }
        match k.record.purpose {
            KeyPurpose::Authorise => {
                keys.entry(k.record.category.clone()).or_insert_with(|| k.public.clone());
            }
            KeyPurpose::Timely => timely = Some(k.key_id),
            _ => {}
        }
    }
    let mut local_presented = BTreeSet::new();
    let mut enrolled = BTreeMap::new();
    for o in earlier(t, d).filter(|o| o.decision.verdict.accepted) {
        let Some(e) = t.event(o.decision.input) else { continue };
        match (o.decision.kind, &e.msg) {
            (DecisionKind::ApAuthorize | DecisionKind::ApVoucher, ProtocolMessage::Authorize { cert: Some(c), .. })
                if t.variant.blinded_certs() =>
            {
                local_presented.insert(signature_bytes(c));
            }
            (DecisionKind::ApEnroll, ProtocolMessage::Issued { identifier, sig }) if t.variant == Variant::V1 => {
                enrolled.insert(identifier.clone(), sig.clone());
            }
            (DecisionKind::ApEnroll, ProtocolMessage::Certificates { certs }) if t.variant == Variant::V2 => {
                for (k, s) in certs {
                    enrolled.insert(k.clone(), s.clone());
                }
            }
            _ => {}
        }
    }
    let pushed_revoked = t
        .events()
        .filter(|e| e.idx < d.idx && &e.to == me)
        .filter_map(|e| match &e.msg {
            ProtocolMessage::RevocationPush { revoked } => Some(revoked.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    ApMemory { keys, timely, local_presented, enrolled, pushed_revoked }
}

fn replay(t: &Transcript, d: &DecisionRecord, ledger: &Ledger) -> Result<Verdict, HarnessError> {
    let e = input_event(t, d)?;
    let dec = &d.decision;
    let bad = || HarnessError::Analysis(format!("decision {} has an unexpected input {}", d.idx, e.msg.kind()));
    if dec.kind == DecisionKind::ServiceAccept {
        return Ok(replay_service(t, d, e, ledger));
    }
    let m = ap_memory(t, d, ledger);
    let inp = ApInputs {
        variant: t.variant,
        settings: &t.settings,
        now: d.tick,
        ledger,
        synced_at: dec.synced_at,
        keys: &m.keys,
        timely: m.timely,
        local_presented: &m.local_presented,
        enrolled: &m.enrolled,
        pushed_revoked: &m.pushed_revoked,
    };
    Ok(match (dec.kind, &e.msg) {
        (DecisionKind::ApEnroll | DecisionKind::ApAssert, ProtocolMessage::Issued { identifier, sig }) => {
            ap_check_identifier(&inp, identifier, sig)
        }
        (DecisionKind::ApEnroll, ProtocolMessage::Certificates { certs }) => ap_enroll_certs(&inp, certs),
        (DecisionKind::ApAssert, ProtocolMessage::RequestIdentifier { identifier, sig, .. }) => {
            ap_assert_enrolled(&inp, identifier, sig)
        }
        (DecisionKind::ApAuthorize | DecisionKind::ApVoucher, ProtocolMessage::Authorize { proof, key, cert, payload }) => {
            let challenge = proof
                .as_ref()
                .map(|p| {
                    let issued_at = t
                        .events()
                        .find(|c| {
                            c.idx < d.idx
                                && c.from == dec.party
                                && matches!(&c.msg, ProtocolMessage::Challenge { challenge } if *challenge == p.challenge)
                        })
                        .map(|c| c.tick);
                    let answered_before = issued_at.is_some()
                        && earlier(t, d).any(|o| {
                            matches!(o.decision.kind, DecisionKind::ApAuthorize | DecisionKind::ApVoucher)
                                && t.event(o.decision.input).is_some_and(|ie| {
                                    matches!(&ie.msg, ProtocolMessage::Authorize { proof: Some(q), .. } if q.challenge == p.challenge)
                                })
                        });
                    ChallengeRecord { issued_at, answered_before }
                })
                .unwrap_or_default();
            ap_authorize(&inp, challenge, proof.as_ref(), key, cert.as_ref(), payload).verdict
        }
        (DecisionKind::ApSpend, ProtocolMessage::Spend { key, cp_sig, endorsement, account, .. }) => {
            let state = ledger.state();
            let category = state.key(&cp_sig.signer).map(|k| k.record.category.clone());
            let author = category
                .and_then(|c| m.keys.get(&c))
                .or_else(|| m.keys.values().next())
                .map(|k| k.key_id())
                .ok_or_else(|| HarnessError::Analysis(format!("{} has no registered authorise key", dec.party)))?;
            let transfer =
                TokenTransfer { note_key: key.clone(), cp_sig: cp_sig.clone(), endorsement: endorsement.clone(), to: *account };
            ap_spend(&inp, author, &transfer)
        }
        _ => return Err(bad()),
    })
}

fn replay_service(t: &Transcript, d: &DecisionRecord, e: &Event, ledger: &Ledger) -> Verdict {
    let me = &d.decision.party;
    let policy = t.party(me).and_then(|p| p.policy.clone()).unwrap_or_default();
    let prior: Vec<&DecisionRecord> = earlier(t, d).filter(|o| o.decision.kind == DecisionKind::ServiceAccept).collect();
    let consumed = prior.iter().any(|o| t.event(o.decision.input).is_some_and(|ie| ie.channel == e.channel));
    let issued_nonce = if consumed {
        None
    } else {
        t.events()
            .find(|r| r.idx < d.idx && &r.from == me && r.channel == e.channel)
            .and_then(|r| match &r.msg {
                ProtocolMessage::Request { nonce, .. } => Some(*nonce),
                _ => None,
            })
    };
    let mut accepted_ids = BTreeSet::new();
    let mut accepted_receipts = BTreeSet::new();
    for o in prior.iter().filter(|o| o.decision.verdict.accepted) {
        match t.event(o.decision.input).map(|ie| &ie.msg) {
            Some(ProtocolMessage::Voucher(v)) => {
                accepted_ids.insert(v.one_time_id);
            }
            Some(ProtocolMessage::SignedReceipt { receipt, .. }) => {
                accepted_receipts.insert(receipt.entry_seq);
            }
            Some(ProtocolMessage::Object { one_time_id, receipt, .. }) => {
                accepted_ids.insert(*one_time_id);
                accepted_receipts.insert(receipt.entry_seq);
            }
            _ => {}
        }
    }
    let inp = ServiceInputs {
        service: me,
        policy: &policy,
        now: d.tick,
        ledger,
        issued_nonce,
        accepted_ids: &accepted_ids,
        accepted_receipts: &accepted_receipts,
    };
    service_accept(&inp, &e.msg)
}
