//! Party state machines: certification provider, authentication provider,
//! user wallet and service provider.
//!
//! Actors never talk to each other directly. Every send, ledger write and
//! decision goes through [`Io`], which the harness implements on top of its
//! scheduler and transcript recorder.

pub mod ap;
pub mod cp;
pub mod decide;
pub mod message;
pub mod service;
pub mod wallet;

use std::fmt;
use std::str::FromStr;

use crate::crypto::KeyId;
use crate::ledger::{LedgerConfig, LedgerError, Receipt, ReusePolicy, SharedLedger, Submission};

pub use ap::AuthProvider;
pub use cp::CertProvider;
pub use decide::{ChainRef, Verdict};
pub use message::{AuthPayload, Field, FieldClass, OfflineVoucher, ProtocolMessage};
pub use service::ServiceProvider;
pub use wallet::{CredentialSlot, Plan, SlotState, TokenNote, Wallet};

pub type PartyId = String;
pub type TaskId = u64;

/// Pseudo-party used as the endpoint of ledger writes and update feeds.
pub const LEDGER: &str = "ledger";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub [u8; 8]);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for ChannelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| e.to_string())?;
        Ok(ChannelId(bytes.try_into().map_err(|_| "channel id must be 8 bytes".to_string())?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Cp,
    Ap,
    User,
    Service,
}

impl Role {
    pub const fn name(self) -> &'static str {
        match self {
            Role::Cp => "cp",
            Role::Ap => "ap",
            Role::User => "user",
            Role::Service => "service",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cp" => Ok(Role::Cp),
            "ap" => Ok(Role::Ap),
            "user" => Ok(Role::User),
            "service" => Ok(Role::Service),
            other => Err(format!("unknown role {other:?} (expected cp, ap, user or service)")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Protocol variants, from the centralised baseline to ledger-backed tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Single-sign-on baseline: the user identifies for every session.
    V0,
    /// Two-phase baseline: identify once, then request assertions by `u`.
    V1,
    /// User-generated keys certified by the CP, blind-signed nonces.
    V2,
    /// Plain certificates published on the ledger.
    V3,
    V3Off,
    /// Blinded certificates under per-interval keys.
    V4,
    V4Off,
    /// Token notes spent through ledger transfers.
    V5,
    V5Off,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::V0,
        Variant::V1,
        Variant::V2,
        Variant::V3,
        Variant::V3Off,
        Variant::V4,
        Variant::V4Off,
        Variant::V5,
        Variant::V5Off,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Variant::V0 => "V0",
            Variant::V1 => "V1",
            Variant::V2 => "V2",
            Variant::V3 => "V3",
            Variant::V3Off => "V3-off",
            Variant::V4 => "V4",
            Variant::V4Off => "V4-off",
            Variant::V5 => "V5",
            Variant::V5Off => "V5-off",
        }
    }

    pub const fn offline(self) -> bool {
        matches!(self, Variant::V3Off | Variant::V4Off | Variant::V5Off)
    }

    /// Certificates live on the ledger.
    pub const fn ledger_certs(self) -> bool {
        matches!(self, Variant::V3 | Variant::V3Off | Variant::V4 | Variant::V4Off)
    }

    pub const fn blinded_certs(self) -> bool {
        matches!(self, Variant::V4 | Variant::V4Off)
    }

    pub const fn tokens(self) -> bool {
        matches!(self, Variant::V5 | Variant::V5Off)
    }

    /// Variants whose AP signs vouchers with a rotating timely key.
    pub const fn uses_timely_key(self) -> bool {
        matches!(self, Variant::V3Off | Variant::V4Off)
    }

    /// Variants where the CP pushes revocations to APs directly.
    pub const fn push_revocation(self) -> bool {
        matches!(self, Variant::V1 | Variant::V2)
    }

    pub fn ledger_config(self, genesis_authority: Vec<u8>, reuse: ReusePolicy) -> LedgerConfig {
        LedgerConfig {
            genesis_authority,
            allow_revoke_one: matches!(self, Variant::V3 | Variant::V3Off),
            blinded_certificates: self.blinded_certs(),
            reuse,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s) || v.name().replace('-', "").eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant {s:?} (expected one of {})", names.join(", "))
            })
    }
}

/// Flow numbers of the operating-phase messages, as labelled in transcripts.
/// Offline variants number the voucher leg first and the redemption after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Steps {
    /// Service to user request.
    pub request: u8,
    /// User to AP.
    pub to_ap: u8,
    /// AP to ledger write (token variants only).
    pub ledger_write: u8,
    /// Ledger to AP receipt (token variants only).
    pub receipt: u8,
    /// AP to user.
    pub from_ap: u8,
    /// User to service presentation.
    pub present: u8,
}

impl Variant {
    pub const fn steps(self) -> Steps {
        let (request, to_ap, ledger_write, receipt, from_ap, present) = match self {
            Variant::V0 => (1, 2, 0, 0, 5, 6),
            Variant::V1 => (5, 6, 0, 0, 7, 8),
            Variant::V2 => (4, 5, 0, 0, 6, 7),
            Variant::V3 | Variant::V4 => (3, 4, 0, 0, 5, 6),
            Variant::V3Off | Variant::V4Off => (5, 3, 0, 0, 4, 6),
            Variant::V5 => (5, 6, 7, 8, 9, 10),
            Variant::V5Off => (9, 5, 6, 7, 8, 10),
        };
        Steps { request, to_ap, ledger_write, receipt, from_ap, present }
    }
}

/// Timing and policy knobs shared by all parties of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settings {
    /// Ticks per credential interval.
    pub interval_ticks: u64,
    /// Lifetime of each timely key.
    pub timely_period: u64,
    /// Largest replica lag, in ticks, an AP tolerates when issuing vouchers.
    pub max_lag: u64,
    pub challenge_window: u64,
    /// Bit-prefix filter length for certificate requests; 0 disables it.
    pub prefix_bits: u64,
    pub reuse: ReusePolicy,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            interval_ticks: 1,
            timely_period: 10,
            max_lag: 10,
            challenge_window: crate::crypto::DEFAULT_CHALLENGE_WINDOW,
            prefix_bits: 0,
            reuse: ReusePolicy::Disallow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecisionKind {
    CpIdentify,
    ApEnroll,
    ApAssert,
    ApAuthorize,
    ApVoucher,
    ApSpend,
    ServiceAccept,
}

impl DecisionKind {
    pub const ALL: [DecisionKind; 7] = [
        DecisionKind::CpIdentify,
        DecisionKind::ApEnroll,
        DecisionKind::ApAssert,
        DecisionKind::ApAuthorize,
        DecisionKind::ApVoucher,
        DecisionKind::ApSpend,
        DecisionKind::ServiceAccept,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            DecisionKind::CpIdentify => "cp-identify",
            DecisionKind::ApEnroll => "ap-enroll",
            DecisionKind::ApAssert => "ap-assert",
            DecisionKind::ApAuthorize => "ap-authorize",
            DecisionKind::ApVoucher => "ap-voucher",
            DecisionKind::ApSpend => "ap-spend",
            DecisionKind::ServiceAccept => "service-accept",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        DecisionKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Decisions the audit explainer can replay.
    pub const fn auditable(self) -> bool {
        !matches!(self, DecisionKind::CpIdentify)
    }
}

/// A recorded accept/reject decision together with the inputs needed to
/// replay it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub party: PartyId,
    pub kind: DecisionKind,
    /// Transcript index of the message that triggered the decision.
    pub input: u64,
    /// Last ledger entry the deciding party had seen.
    pub as_of: Option<u64>,
    /// Tick of the deciding party's last ledger sync.
    pub synced_at: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskOutcome {
    /// A service accepted the presented artifact.
    Accepted,
    /// Setup or prefetch completed.
    Completed,
    Rejected(String),
}

impl TaskOutcome {
    pub fn reason(&self) -> &str {
        match self {
            TaskOutcome::Accepted => "accepted",
            TaskOutcome::Completed => "completed",
            TaskOutcome::Rejected(r) => r,
        }
    }

    pub fn is_success(&self) -> bool {
        !matches!(self, TaskOutcome::Rejected(_))
    }
}

/// The environment actors run in.
pub trait Io {
    fn now(&self) -> u64;
    fn ledger(&self) -> &SharedLedger;
    fn new_channel(&mut self) -> ChannelId;
    fn send(&mut self, from: &str, to: &str, task: Option<TaskId>, channel: ChannelId, step: u8, msg: ProtocolMessage);
    /// Appends to the ledger, recording the write (and any failure) in the
    /// transcript.
    fn append(&mut self, from: &str, task: Option<TaskId>, step: u8, sub: &Submission) -> Result<Receipt, LedgerError>;
    /// Records a ledger-originated delivery (receipt or update feed).
    fn from_ledger(&mut self, to: &str, task: Option<TaskId>, step: u8, msg: ProtocolMessage);
    /// Records a decision; returns its transcript index.
    fn decide(&mut self, decision: Decision) -> u64;
    /// Records a value the party learned privately from the message being
    /// handled (for example the opened contents of a sealed box).
    fn observe(&mut self, party: &str, value: Vec<u8>);
    fn finish(&mut self, task: TaskId, outcome: TaskOutcome);
    /// Index of the transcript event currently being handled.
    fn current_event(&self) -> u64;
}

/// A message in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub task: Option<TaskId>,
    pub from: PartyId,
    pub to: PartyId,
    pub channel: ChannelId,
    pub step: u8,
    pub msg: ProtocolMessage,
}

/// Service account on the ledger, derived from the service id.
pub fn service_account(service: &str) -> KeyId {
    KeyId(crate::crypto::sha256(&[b"account:", service.as_bytes()]))
}

/// Foundational identity bytes a user seals to a CP.
pub fn identity_plaintext(user: &str, salt: &[u8]) -> Vec<u8> {
    crate::wire::Encoder::tagged("identity:").text(user).bytes(salt).finish()
}

pub fn parse_identity(plaintext: &[u8]) -> Option<String> {
    let mut d = crate::wire::Decoder::tagged(plaintext, "identity:").ok()?;
    let user = d.text().ok()?;
    d.bytes().ok()?;
    d.finish().ok()?;
    Some(user)
}

/// Digest under which a CP remembers an identity.
pub fn identity_digest(user: &str) -> Vec<u8> {
    crate::crypto::sha256(&[b"identity-digest:", user.as_bytes()]).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("v4off".parse::<Variant>().unwrap(), Variant::V4Off);
        assert!("V9".parse::<Variant>().is_err());
    }

    #[test]
    fn identity_plaintext_round_trip() {
        let p = identity_plaintext("alice", &[1, 2, 3]);
        assert_eq!(parse_identity(&p).as_deref(), Some("alice"));
        assert_eq!(parse_identity(b"garbage"), None);
    }

    #[test]
    fn channel_ids_parse() {
        let c = ChannelId([1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(c.to_string().parse::<ChannelId>().unwrap(), c);
    }
}
