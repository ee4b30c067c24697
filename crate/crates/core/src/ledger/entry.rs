//! Ledger entry kinds and their canonical encodings.

use std::fmt;
use std::str::FromStr;

use crate::crypto::{sha256, Domain, KeyId, Signature};
use crate::wire::{Decoder, Encoder, WireError};
use crate::KeyPair;

pub const TAG_CERTIFICATE: &str = "cert:";
pub const TAG_REVOKE_ONE: &str = "revoke1:";
pub const TAG_REVOKE_ALL: &str = "revokeN:";
pub const TAG_KEY_REGISTRY: &str = "keyreg:";
pub const TAG_TOKEN_ISSUE: &str = "tok-issue:";
pub const TAG_TOKEN_TRANSFER: &str = "tok-xfer:";
pub const TAG_PRESENTED: &str = "presented:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryKind {
    Certificate,
    RevokeOne,
    RevokeAll,
    KeyRegistry,
    TokenIssue,
    TokenTransfer,
    PresentedSignature,
}

impl EntryKind {
    pub const ALL: [EntryKind; 7] = [
        EntryKind::Certificate,
        EntryKind::RevokeOne,
        EntryKind::RevokeAll,
        EntryKind::KeyRegistry,
        EntryKind::TokenIssue,
        EntryKind::TokenTransfer,
        EntryKind::PresentedSignature,
    ];

    pub const fn tag(self) -> &'static str {
        match self {
            EntryKind::Certificate => TAG_CERTIFICATE,
            EntryKind::RevokeOne => TAG_REVOKE_ONE,
            EntryKind::RevokeAll => TAG_REVOKE_ALL,
            EntryKind::KeyRegistry => TAG_KEY_REGISTRY,
            EntryKind::TokenIssue => TAG_TOKEN_ISSUE,
            EntryKind::TokenTransfer => TAG_TOKEN_TRANSFER,
            EntryKind::PresentedSignature => TAG_PRESENTED,
        }
    }

    pub fn of_payload(bytes: &[u8]) -> Option<EntryKind> {
        Self::ALL.into_iter().find(|k| bytes.starts_with(k.tag().as_bytes()))
    }

    pub const fn name(self) -> &'static str {
        match self {
            EntryKind::Certificate => "certificate",
            EntryKind::RevokeOne => "revoke-one",
            EntryKind::RevokeAll => "revoke-all",
            EntryKind::KeyRegistry => "key-registry",
            EntryKind::TokenIssue => "token-issue",
            EntryKind::TokenTransfer => "token-transfer",
            EntryKind::PresentedSignature => "presented-signature",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Cp,
    Ap,
}

impl Role {
    pub const fn name(self) -> &'static str {
        match self {
            Role::Cp => "cp",
            Role::Ap => "ap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyPurpose {
    /// CP key that certifies user credential keys (`CP` or `CP_i`).
    Credential,
    /// CP key that signs token notes.
    Token,
    /// AP key that signs nonces, receipts and objects.
    Authorise,
    /// Rotating AP key (`AP_T`) that expires rather than being revoked.
    Timely,
}

impl KeyPurpose {
    pub const fn name(self) -> &'static str {
        match self {
            KeyPurpose::Credential => "credential",
            KeyPurpose::Token => "token",
            KeyPurpose::Authorise => "authorise",
            KeyPurpose::Timely => "timely",
        }
    }

    fn code(self) -> u64 {
        match self {
            KeyPurpose::Credential => 0,
            KeyPurpose::Token => 1,
            KeyPurpose::Authorise => 2,
            KeyPurpose::Timely => 3,
        }
    }

    fn from_code(c: u64) -> Result<Self, WireError> {
        Ok(match c {
            0 => KeyPurpose::Credential,
            1 => KeyPurpose::Token,
            2 => KeyPurpose::Authorise,
            3 => KeyPurpose::Timely,
            other => return Err(WireError::UnknownVariant(format!("key purpose {other}"))),
        })
    }

    pub const fn role(self) -> Role {
        match self {
            KeyPurpose::Credential | KeyPurpose::Token => Role::Cp,
            KeyPurpose::Authorise | KeyPurpose::Timely => Role::Ap,
        }
    }
}

/// Key-registry record body. Validity (active or revoked) is derived from
/// later revoke-all entries, not stored here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub owner: String,
    pub purpose: KeyPurpose,
    /// Policy attribute the key stands for, e.g. "adult".
    pub category: String,
    pub public_key: Vec<u8>,
    pub interval: Option<u64>,
    pub expiry_tick: Option<u64>,
}

impl KeyRecord {
    pub fn role(&self) -> Role {
        self.purpose.role()
    }

    pub fn key_id(&self) -> Option<KeyId> {
        crate::PublicKey::from_bytes(&self.public_key).ok().map(|k| k.key_id())
    }
}

/// Certificate body: exactly the certified key value and the bare signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    /// Public key bytes `x_i`, or the blinded value `[x_i]`.
    pub key_value: Vec<u8>,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTransfer {
    /// Public key `x_i` that controls the note.
    pub note_key: Vec<u8>,
    /// Unblinded `CP(x_i)`.
    pub cp_sig: Signature,
    /// `x_i(Service)`: the note key's signature over the destination account.
    pub endorsement: Signature,
    pub to: KeyId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Certificate(Certificate),
    RevokeOne { cert_seq: u64 },
    RevokeAll { key_id: KeyId },
    KeyRegistry(KeyRecord),
    /// Credits `amount` tokens to the issuing key's pool.
    TokenIssue { amount: u64 },
    TokenTransfer(TokenTransfer),
    /// An unblinded credential signature as presented to an AP.
    PresentedSignature { cert_sig: Signature },
}

impl Payload {
    pub fn kind(&self) -> EntryKind {
        match self {
            Payload::Certificate(_) => EntryKind::Certificate,
            Payload::RevokeOne { .. } => EntryKind::RevokeOne,
            Payload::RevokeAll { .. } => EntryKind::RevokeAll,
            Payload::KeyRegistry(_) => EntryKind::KeyRegistry,
            Payload::TokenIssue { .. } => EntryKind::TokenIssue,
            Payload::TokenTransfer(_) => EntryKind::TokenTransfer,
            Payload::PresentedSignature { .. } => EntryKind::PresentedSignature,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::tagged(self.kind().tag());
        match self {
            Payload::Certificate(c) => e.bytes(&c.key_value).signature(&c.signature),
            Payload::RevokeOne { cert_seq } => e.u64(*cert_seq),
            Payload::RevokeAll { key_id } => e.key_id(key_id),
            Payload::KeyRegistry(r) => e
                .text(&r.owner)
                .u64(r.purpose.code())
                .text(&r.category)
                .bytes(&r.public_key)
                .opt_u64(r.interval)
                .opt_u64(r.expiry_tick),
            Payload::TokenIssue { amount } => e.u64(*amount),
            Payload::TokenTransfer(t) => e
                .bytes(&t.note_key)
                .signature(&t.cp_sig)
                .signature(&t.endorsement)
                .key_id(&t.to),
            Payload::PresentedSignature { cert_sig } => e.signature(cert_sig),
        };
        e.finish()
    }

    /// Strict decoding: unknown tags, missing fields and extra fields are all
    /// rejected.
    pub fn decode(bytes: &[u8]) -> Result<Payload, WireError> {
        let kind = EntryKind::of_payload(bytes)
            .ok_or_else(|| WireError::UnknownVariant("entry tag".into()))?;
        let mut d = Decoder::tagged(bytes, kind.tag())?;
        let payload = match kind {
            EntryKind::Certificate => Payload::Certificate(Certificate {
                key_value: d.vec()?,
                signature: d.signature()?,
            }),
            EntryKind::RevokeOne => Payload::RevokeOne { cert_seq: d.u64()? },
            EntryKind::RevokeAll => Payload::RevokeAll { key_id: d.key_id()? },
            EntryKind::KeyRegistry => Payload::KeyRegistry(KeyRecord {
                owner: d.text()?,
                purpose: KeyPurpose::from_code(d.u64()?)?,
                category: d.text()?,
                public_key: d.vec()?,
                interval: d.opt_u64()?,
                expiry_tick: d.opt_u64()?,
            }),
            EntryKind::TokenIssue => Payload::TokenIssue { amount: d.u64()? },
            EntryKind::TokenTransfer => Payload::TokenTransfer(TokenTransfer {
                note_key: d.vec()?,
                cp_sig: d.signature()?,
                endorsement: d.signature()?,
                to: d.key_id()?,
            }),
            EntryKind::PresentedSignature => Payload::PresentedSignature { cert_sig: d.signature()? },
        };
        d.finish()?;
        Ok(payload)
    }
}

/// What an author hands to the ledger: canonical payload bytes plus a
/// signature over them. Sequence number and timestamp are assigned on append,
/// so the signature is independent of both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub payload: Vec<u8>,
    pub author_sig: Signature,
}

impl Submission {
    pub fn new(payload: &Payload, author: &KeyPair) -> Submission {
        Self::raw(payload.encode(), author)
    }

    pub fn raw(payload: Vec<u8>, author: &KeyPair) -> Submission {
        let author_sig = author
            .sign_in(Domain::LedgerEntry, &payload)
            .expect("payload carries at least a tag");
        Submission { payload, author_sig }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub seq: u64,
    pub timestamp: u64,
    pub payload: Payload,
    pub author_key_id: KeyId,
    pub author_sig: Signature,
}

impl LedgerEntry {
    pub fn kind(&self) -> EntryKind {
        self.payload.kind()
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        self.payload.encode()
    }

    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .u64(self.seq)
            .u64(self.timestamp)
            .bytes(&self.payload_bytes())
            .key_id(&self.author_key_id)
            .signature(&self.author_sig)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<LedgerEntry, WireError> {
        let mut d = Decoder::new(bytes);
        let seq = d.u64()?;
        let timestamp = d.u64()?;
        let payload = Payload::decode(d.bytes()?)?;
        let author_key_id = d.key_id()?;
        let author_sig = d.signature()?;
        d.finish()?;
        Ok(LedgerEntry { seq, timestamp, payload, author_key_id, author_sig })
    }

    pub fn submission(&self) -> Submission {
        Submission { payload: self.payload_bytes(), author_sig: self.author_sig.clone() }
    }
}

/// Inclusion receipt: the chain head immediately after `entry_seq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Receipt {
    pub entry_seq: u64,
    pub ledger_head_hash: [u8; 32],
}

impl Receipt {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::tagged("receipt:").u64(self.entry_seq).bytes(&self.ledger_head_hash).finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Receipt, WireError> {
        let mut d = Decoder::tagged(bytes, "receipt:")?;
        let r = Receipt { entry_seq: d.u64()?, ledger_head_hash: d.array32()? };
        d.finish()?;
        Ok(r)
    }
}

pub fn chain_step(previous: &[u8; 32], entry_bytes: &[u8]) -> [u8; 32] {
    sha256(&[b"chain:", previous, entry_bytes])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum ReusePolicy {
    /// A second presentation of the same credential signature is refused.
    #[default]
    Disallow,
    /// Repeat presentations are recorded and thereby linked to each other.
    BindExPost,
}

impl ReusePolicy {
    pub const fn name(self) -> &'static str {
        match self {
            ReusePolicy::Disallow => "disallow",
            ReusePolicy::BindExPost => "bind-ex-post",
        }
    }
}

impl FromStr for ReusePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disallow" => Ok(ReusePolicy::Disallow),
            "bind-ex-post" => Ok(ReusePolicy::BindExPost),
            other => Err(format!("unknown reuse policy {other:?} (expected disallow or bind-ex-post)")),
        }
    }
}

/// Ledger-wide rules fixed at genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerConfig {
    pub genesis_authority: Vec<u8>,
    pub allow_revoke_one: bool,
    pub blinded_certificates: bool,
    pub reuse: ReusePolicy,
}

impl LedgerConfig {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::tagged("ledger-config:")
            .bytes(&self.genesis_authority)
            .flag(self.allow_revoke_one)
            .flag(self.blinded_certificates)
            .flag(self.reuse == ReusePolicy::BindExPost)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<LedgerConfig, WireError> {
        let mut d = Decoder::tagged(bytes, "ledger-config:")?;
        let c = LedgerConfig {
            genesis_authority: d.vec()?,
            allow_revoke_one: d.flag()?,
            blinded_certificates: d.flag()?,
            reuse: if d.flag()? { ReusePolicy::BindExPost } else { ReusePolicy::Disallow },
        };
        d.finish()?;
        Ok(c)
    }

    pub fn genesis_hash(&self) -> [u8; 32] {
        sha256(&[b"genesis:", &self.encode()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(b: u8) -> Signature {
        Signature { signer: KeyId([b; 32]), value: vec![b; 8] }
    }

    #[test]
    fn payloads_round_trip() {
        let all = vec![
            Payload::Certificate(Certificate { key_value: vec![1, 2], signature: sig(3) }),
            Payload::RevokeOne { cert_seq: 9 },
            Payload::RevokeAll { key_id: KeyId([4; 32]) },
            Payload::KeyRegistry(KeyRecord {
                owner: "ap1".into(),
                purpose: KeyPurpose::Timely,
                category: "default".into(),
                public_key: vec![5; 10],
                interval: None,
                expiry_tick: Some(20),
            }),
            Payload::TokenIssue { amount: 5 },
            Payload::TokenTransfer(TokenTransfer {
                note_key: vec![6],
                cp_sig: sig(7),
                endorsement: sig(8),
                to: KeyId([9; 32]),
            }),
            Payload::PresentedSignature { cert_sig: sig(10) },
        ];
        for p in all {
            let bytes = p.encode();
            assert!(bytes.starts_with(p.kind().tag().as_bytes()));
            assert_eq!(Payload::decode(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn certificate_with_extra_field_is_malformed() {
        let mut bytes = Payload::Certificate(Certificate { key_value: vec![1], signature: sig(2) }).encode();
        bytes.extend_from_slice(&Encoder::new().text("issued-to=alice").finish());
        assert_eq!(Payload::decode(&bytes), Err(WireError::Trailing));
    }

    #[test]
    fn config_and_receipt_round_trip() {
        let c = LedgerConfig {
            genesis_authority: vec![1, 2, 3],
            allow_revoke_one: true,
            blinded_certificates: false,
            reuse: ReusePolicy::BindExPost,
        };
        assert_eq!(LedgerConfig::decode(&c.encode()).unwrap(), c);
        let r = Receipt { entry_seq: 3, ledger_head_hash: [1; 32] };
        assert_eq!(Receipt::decode(&r.encode()).unwrap(), r);
    }
}
