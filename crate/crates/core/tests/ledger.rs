use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use proptest::prelude::*;
use unlinkid::crypto::{blind, seeded_rng, unblind, BlindingFactor};
use unlinkid::ledger::{
    scan_certificate_metadata, Certificate, EntryKind, KeyPurpose, KeyRecord, KeyStatus, Ledger, LedgerConfig,
    LedgerError, Payload, ReusePolicy, RevocationStatus, Submission, TokenTransfer, TAG_CERTIFICATE,
};
use unlinkid::wire::Encoder;
use unlinkid::{Domain, KeyId, KeyPair, ParamSet};

fn key(name: &str) -> KeyPair {
    KeyPair::generate(name.as_bytes(), ParamSet::Compact).unwrap()
}

struct Keys {
    genesis: KeyPair,
    cp: Vec<KeyPair>,
    token: KeyPair,
    ap: KeyPair,
    notes: Vec<KeyPair>,
    accounts: Vec<KeyPair>,
}

fn keys() -> &'static Keys {
    static K: OnceLock<Keys> = OnceLock::new();
    K.get_or_init(|| Keys {
        genesis: key("genesis"),
        cp: (0..3).map(|i| key(&format!("cp{i}"))).collect(),
        token: key("token"),
        ap: key("ap"),
        notes: (0..64).map(|i| key(&format!("note{i}"))).collect(),
        accounts: (0..3).map(|i| key(&format!("svc{i}"))).collect(),
    })
}

fn config(revoke_one: bool, blinded: bool, reuse: ReusePolicy) -> LedgerConfig {
    LedgerConfig {
        genesis_authority: keys().genesis.public.to_bytes(),
        allow_revoke_one: revoke_one,
        blinded_certificates: blinded,
        reuse,
    }
}

fn record(owner: &str, purpose: KeyPurpose, k: &KeyPair, interval: Option<u64>, expiry: Option<u64>) -> Payload {
    Payload::KeyRegistry(KeyRecord {
        owner: owner.into(),
        purpose,
        category: "general".into(),
        public_key: k.public.to_bytes(),
        interval,
        expiry_tick: expiry,
    })
}

/// Ledger with three credential keys owned by one CP, a token key and an
/// authorise key, all registered by the genesis authority.
fn ledger(revoke_one: bool, blinded: bool, reuse: ReusePolicy) -> Ledger {
    let k = keys();
    let mut l = Ledger::new(config(revoke_one, blinded, reuse)).unwrap();
    for (i, c) in k.cp.iter().enumerate() {
        l.append(&Submission::new(&record("cp", KeyPurpose::Credential, c, Some(i as u64), None), &k.genesis), 0)
            .unwrap();
    }
    l.append(&Submission::new(&record("cp", KeyPurpose::Token, &k.token, None, None), &k.genesis), 0).unwrap();
    l.append(&Submission::new(&record("ap", KeyPurpose::Authorise, &k.ap, None, None), &k.genesis), 0).unwrap();
    l
}

fn plain_cert(cp: &KeyPair, subject: &KeyPair) -> Payload {
    let v = subject.public.to_bytes();
    Payload::Certificate(Certificate { signature: cp.sign_in(Domain::CredentialKey, &v).unwrap(), key_value: v })
}

#[derive(Debug, Clone)]
enum Op {
    Cert { cp: usize, subject: usize },
    RevokeOne { pick: usize },
    RevokeAll { cp: usize },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0usize..3, 0usize..64).prop_map(|(cp, subject)| Op::Cert { cp, subject }),
        2 => any::<usize>().prop_map(|pick| Op::RevokeOne { pick }),
        1 => (0usize..3).prop_map(|cp| Op::RevokeAll { cp }),
    ]
}

/// Applies `ops` to a revoke-one ledger, ignoring rejected operations.
fn build(ops: &[Op]) -> Ledger {
    let k = keys();
    let mut l = ledger(true, false, ReusePolicy::Disallow);
    for (tick, o) in ops.iter().enumerate() {
        let tick = tick as u64;
        let sub = match o {
            Op::Cert { cp, subject } => Submission::new(&plain_cert(&k.cp[*cp], &k.notes[*subject]), &k.cp[*cp]),
            Op::RevokeOne { pick } => {
                let certs: Vec<_> = l.state().certs().map(|c| (c.seq, c.cert.signature.signer)).collect();
                if certs.is_empty() {
                    continue;
                }
                let (seq, signer) = certs[pick % certs.len()];
                let cp = k.cp.iter().find(|c| c.key_id == signer).unwrap();
                Submission::new(&Payload::RevokeOne { cert_seq: seq }, cp)
            }
            Op::RevokeAll { cp } => Submission::new(&Payload::RevokeAll { key_id: k.cp[*cp].key_id }, &k.cp[*cp]),
        };
        let _ = l.append(&sub, tick);
    }
    l
}

/// Revocation status by scanning the raw entries `0..=as_of`.
fn oracle_status(l: &Ledger, cert_seq: u64, as_of: u64) -> Option<RevocationStatus> {
    let entries = &l.entries()[..=as_of as usize];
    let Payload::Certificate(c) = &entries.get(cert_seq as usize)?.payload else { return None };
    let mut one = None;
    let mut all = None;
    for e in entries {
        match &e.payload {
            Payload::RevokeOne { cert_seq: s } if *s == cert_seq && one.is_none() => one = Some(e.seq),
            Payload::RevokeAll { key_id } if *key_id == c.signature.signer && all.is_none() => all = Some(e.seq),
            _ => {}
        }
    }
    Some(match (all, one) {
        (Some(seq), _) => RevocationStatus::RevokedAll { seq },
        (None, Some(seq)) => RevocationStatus::RevokedOne { seq },
        (None, None) => RevocationStatus::Valid,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn certs_by_signer_matches_linear_scan(ops in proptest::collection::vec(op(), 1..40)) {
        let l = build(&ops);
        for cp in &keys().cp {
            let indexed: Vec<u64> = l.state().certs_by_signer(&cp.key_id).iter().map(|c| c.seq).collect();
            let scanned: Vec<u64> = l
                .entries()
                .iter()
                .filter(|e| matches!(&e.payload, Payload::Certificate(c) if c.signature.signer == cp.key_id))
                .map(|e| e.seq)
                .collect();
            prop_assert_eq!(indexed, scanned);
        }
    }

    #[test]
    fn revocation_status_matches_prefix_replay(ops in proptest::collection::vec(op(), 1..40)) {
        let l = build(&ops);
        for as_of in 0..l.len() {
            let prefix = l.prefix(Some(as_of));
            for c in l.state().certs() {
                let expected = oracle_status(&l, c.seq, as_of);
                let got = l.state().revocation_status(c.seq, as_of).ok();
                prop_assert_eq!(got, expected);
                prop_assert_eq!(prefix.state().revocation_status(c.seq, as_of).ok(), expected);
            }
        }
    }

    #[test]
    fn dump_roundtrips_and_chain_verifies(ops in proptest::collection::vec(op(), 1..30)) {
        let l = build(&ops);
        prop_assert!(l.verify_chain());
        let back = Ledger::load(&l.dump()).unwrap();
        prop_assert_eq!(back.dump(), l.dump());
        prop_assert_eq!(back.head_hash(), l.head_hash());
    }

    #[test]
    fn supply_is_conserved_and_double_spends_rejected(
        spends in proptest::collection::vec((0usize..64, 0usize..3), 1..80),
        minted in 20u64..60,
    ) {
        let k = keys();
        let mut l = ledger(false, true, ReusePolicy::Disallow);
        l.append(&Submission::new(&Payload::TokenIssue { amount: minted }, &k.token), 1).unwrap();
        let mut spent = BTreeSet::new();
        let mut doubles = 0;
        let mut rejected_doubles = 0;
        for (tick, (note, svc)) in spends.iter().enumerate() {
            let note_key = &k.notes[*note];
            let to = k.accounts[*svc].key_id;
            let nk = note_key.public.to_bytes();
            let t = TokenTransfer {
                cp_sig: k.token.sign_in(Domain::CredentialKey, &nk).unwrap(),
                endorsement: note_key.sign_in(Domain::Endorsement, to.as_bytes()).unwrap(),
                note_key: nk,
                to,
            };
            let r = l.append(&Submission::new(&Payload::TokenTransfer(t), &k.ap), 2 + tick as u64);
            if !spent.insert(*note) {
                doubles += 1;
                if matches!(r, Err(LedgerError::DoubleSpend { .. })) {
                    rejected_doubles += 1;
                }
            } else if spent.len() as u64 > minted {
                let short = matches!(r, Err(LedgerError::InsufficientBalance { .. }));
                prop_assert!(short, "expected insufficient balance, got {:?}", r);
                spent.remove(note);
            } else {
                prop_assert!(r.is_ok(), "{:?}", r);
            }
        }
        prop_assert_eq!(doubles, rejected_doubles);
        for as_of in 0..l.len() {
            let s = l.state_at(Some(as_of));
            let total: u64 = s.balances().values().sum();
            prop_assert_eq!(total, s.total_issued() - s.total_retired());
        }
    }
}

#[test]
fn certificate_with_extra_field_is_malformed() {
    let k = keys();
    let mut l = ledger(true, false, ReusePolicy::Disallow);
    let Payload::Certificate(c) = plain_cert(&k.cp[0], &k.notes[0]) else { unreachable!() };
    let raw = Encoder::tagged(TAG_CERTIFICATE)
        .bytes(&c.key_value)
        .signature(&c.signature)
        .text("name=alice")
        .finish();
    let err = l.append(&Submission::raw(raw.clone(), &k.cp[0]), 1).unwrap_err();
    assert!(matches!(err, LedgerError::MalformedPayload(_)), "{err:?}");
    let v = scan_certificate_metadata([(0, raw.as_slice())]);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].field_count, 3);
    let ok = plain_cert(&k.cp[0], &k.notes[0]).encode();
    assert!(scan_certificate_metadata([(0, ok.as_slice())]).is_empty());
}

#[test]
fn blinded_ledger_refuses_revoke_one_but_honours_revoke_all() {
    let k = keys();
    let mut l = ledger(false, true, ReusePolicy::Disallow);
    let mut rng = seeded_rng(b"blinded");
    let f = BlindingFactor::random(&mut rng, &k.cp[0].public);
    let b = blind(Domain::CredentialKey, &k.notes[1].public.to_bytes(), &f, &k.cp[0].public).unwrap();
    let sig = k.cp[0].sign_blinded(&b).unwrap();
    let cert = Payload::Certificate(Certificate { key_value: b.to_bytes(&k.cp[0].public), signature: sig.clone() });
    let r = l.append(&Submission::new(&cert, &k.cp[0]), 1).unwrap();
    assert!(l.verify_receipt(&r));
    let err = l.append(&Submission::new(&Payload::RevokeOne { cert_seq: r.entry_seq }, &k.cp[0]), 1).unwrap_err();
    assert!(matches!(err, LedgerError::Policy(_)));
    // the unblinded credential is not on the ledger at all
    let unblinded = unblind(&sig, &f, &k.cp[0].public).unwrap();
    assert!(l.entries().iter().all(|e| !e.encode().windows(unblinded.value.len()).any(|w| w == unblinded.value)));
    l.append(&Submission::new(&Payload::RevokeAll { key_id: k.cp[0].key_id }, &k.cp[0]), 2).unwrap();
    assert!(matches!(l.state().signer_status(&k.cp[0].key_id, l.len() - 1), RevocationStatus::RevokedAll { .. }));
    assert_eq!(l.state().signer_status(&k.cp[0].key_id, r.entry_seq), RevocationStatus::Valid);
}

#[test]
fn timely_keys_expire_and_cannot_be_revoked() {
    let k = keys();
    let mut l = ledger(false, true, ReusePolicy::Disallow);
    let timely = &k.notes[10];
    let r = l.append(&Submission::new(&record("ap", KeyPurpose::Timely, timely, None, Some(10)), &k.ap), 0).unwrap();
    let overlap = l.append(&Submission::new(&record("ap", KeyPurpose::Timely, &k.notes[11], None, Some(12)), &k.ap), 1);
    assert_eq!(overlap.unwrap_err(), LedgerError::TimelyOverlap);
    let revoke = l.append(&Submission::new(&Payload::RevokeAll { key_id: timely.key_id }, &k.genesis), 1);
    assert!(matches!(revoke.unwrap_err(), LedgerError::Policy(_)));
    let s = l.state();
    assert_eq!(s.key_status(&timely.key_id, r.entry_seq, 9), KeyStatus::Active);
    assert_eq!(s.key_status(&timely.key_id, r.entry_seq, 10), KeyStatus::Expired { expiry_tick: 10 });
    assert_eq!(s.key_status(&timely.key_id, r.entry_seq - 1, 5), KeyStatus::NotYetRegistered);
    l.append(&Submission::new(&record("ap", KeyPurpose::Timely, &k.notes[11], None, Some(20)), &k.ap), 10).unwrap();
}

#[test]
fn presented_signatures_follow_reuse_policy() {
    let k = keys();
    let sig = k.cp[0].sign_in(Domain::CredentialKey, b"x").unwrap();
    let p = Payload::PresentedSignature { cert_sig: sig };
    let mut strict = ledger(false, true, ReusePolicy::Disallow);
    strict.append(&Submission::new(&p, &k.ap), 1).unwrap();
    assert!(matches!(
        strict.append(&Submission::new(&p, &k.ap), 2).unwrap_err(),
        LedgerError::DuplicatePresentation { .. }
    ));
    let mut lax = ledger(false, true, ReusePolicy::BindExPost);
    lax.append(&Submission::new(&p, &k.ap), 1).unwrap();
    lax.append(&Submission::new(&p, &k.ap), 2).unwrap();
}

#[test]
fn clock_and_author_rules() {
    let k = keys();
    let mut l = ledger(true, false, ReusePolicy::Disallow);
    l.append(&Submission::new(&plain_cert(&k.cp[0], &k.notes[2]), &k.cp[0]), 5).unwrap();
    let err = l.append(&Submission::new(&plain_cert(&k.cp[0], &k.notes[3]), &k.cp[0]), 4).unwrap_err();
    assert_eq!(err, LedgerError::ClockWentBackwards { last: 5, now: 4 });
    let err = l.append(&Submission::new(&plain_cert(&k.cp[0], &k.notes[3]), &k.ap), 5).unwrap_err();
    assert!(matches!(err, LedgerError::WrongAuthorRole { .. } | LedgerError::BadCertificate(_)));
    let stranger = &k.notes[4];
    let err = l.append(&Submission::new(&plain_cert(stranger, &k.notes[3]), stranger), 5).unwrap_err();
    assert!(matches!(err, LedgerError::UnknownAuthor(_)));
    let dup = l.append(&Submission::new(&plain_cert(&k.cp[0], &k.notes[2]), &k.cp[0]), 6).unwrap_err();
    assert!(matches!(dup, LedgerError::DuplicateCertificate { first_seq: 5 }));
}

#[test]
fn tampered_dump_is_rejected() {
    let k = keys();
    let mut l = ledger(true, false, ReusePolicy::Disallow);
    l.append(&Submission::new(&plain_cert(&k.cp[1], &k.notes[5]), &k.cp[1]), 1).unwrap();
    let dump = l.dump();
    let mut lines: Vec<String> = dump.lines().map(String::from).collect();
    // swap the certificate's signer field byte far inside the payload
    let last = lines.last_mut().unwrap();
    let mid = last.len() / 2;
    let c = if &last[mid..mid + 1] == "0" { "1" } else { "0" };
    last.replace_range(mid..mid + 1, c);
    assert!(Ledger::load(&lines.join("\n")).is_err());
}

#[test]
fn entry_kinds_are_counted_by_scan() {
    let l = build(&[Op::Cert { cp: 0, subject: 1 }, Op::Cert { cp: 1, subject: 2 }, Op::RevokeAll { cp: 0 }]);
    let mut kinds: BTreeMap<EntryKind, usize> = BTreeMap::new();
    for e in l.entries() {
        *kinds.entry(e.kind()).or_default() += 1;
    }
    assert_eq!(kinds[&EntryKind::KeyRegistry], 5);
    assert_eq!(kinds[&EntryKind::Certificate], 2);
    assert_eq!(kinds[&EntryKind::RevokeAll], 1);
    let ids: BTreeSet<KeyId> = l.state().keys().map(|k| k.key_id).collect();
    assert_eq!(ids.len(), 5);
}
