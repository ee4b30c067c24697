//! Append-only, hash-chained log of certificates, revocations, key-registry
//! records, token events and presented-signature records.

mod entry;
mod state;
mod store;

pub use entry::{
    chain_step, Certificate, EntryKind, KeyPurpose, KeyRecord, LedgerConfig, LedgerEntry, Payload, Receipt,
    ReusePolicy, Role, Submission, TokenTransfer, TAG_CERTIFICATE, TAG_KEY_REGISTRY, TAG_PRESENTED,
    TAG_REVOKE_ALL, TAG_REVOKE_ONE, TAG_TOKEN_ISSUE, TAG_TOKEN_TRANSFER,
};
pub use state::{CertRecord, KeyStatus, LedgerState, RegisteredKey, RevocationStatus};
pub use store::{scan_certificate_metadata, Ledger, MetadataViolation, SharedLedger};

use crate::crypto::KeyId;
use crate::wire::WireError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("malformed payload: {0}")]
    MalformedPayload(WireError),
    #[error("author signature does not verify")]
    BadAuthorSignature,
    #[error("author key {0:?} is not registered")]
    UnknownAuthor(KeyId),
    #[error("author key is not active: {0}")]
    InactiveAuthor(String),
    #[error("a {purpose} key may not author this entry")]
    WrongAuthorRole { purpose: &'static str },
    #[error("timestamp {now} precedes the last entry at tick {last}")]
    ClockWentBackwards { last: u64, now: u64 },
    #[error("bad certificate: {0}")]
    BadCertificate(&'static str),
    #[error("key value already certified at seq {first_seq}")]
    DuplicateCertificate { first_seq: u64 },
    #[error("policy violation: {0}")]
    Policy(String),
    #[error("no certificate at seq {0}")]
    UnknownCertificate(u64),
    #[error("already revoked")]
    AlreadyRevoked,
    #[error("key {0:?} is not registered")]
    UnknownKey(KeyId),
    #[error("key {0:?} is already registered")]
    DuplicateKey(KeyId),
    #[error("bad registration: {0}")]
    BadRegistration(&'static str),
    #[error("owner already has an unexpired timely key")]
    TimelyOverlap,
    #[error("token amount must be positive")]
    ZeroAmount,
    #[error("account {account:?} has insufficient balance")]
    InsufficientBalance { account: KeyId },
    #[error("note already spent at seq {first_seq}")]
    DoubleSpend { first_seq: u64 },
    #[error("endorsement does not verify under the note key")]
    InvalidEndorsement,
    #[error("invalid token note: {0}")]
    InvalidNote(&'static str),
    #[error("signature already presented at seq {first_seq}")]
    DuplicatePresentation { first_seq: u64 },
    #[error("cursor {cursor} is beyond the head")]
    CursorBeyondHead { cursor: u64 },
    #[error("expected seq {expected}, found {found}")]
    SeqMismatch { expected: u64, found: u64 },
    #[error("genesis authority key is malformed")]
    BadGenesisKey,
    #[error("bad ledger dump: {0}")]
    BadDump(String),
}
