//! Deterministic RSA primitives: keys, full-domain-hash signatures, Chaum
//! blinding, challenge-response ownership proofs and a small sealed-box
//! construction for identity payloads.

mod blind;
mod hash;
mod keys;
mod ownership;
mod scalar;
mod seal;
mod signature;

pub use blind::{blind, unblind, BlindedMessage, BlindingFactor};
pub use hash::{hash_to_unit, seeded_rng, sha256, Domain};
pub use keys::{is_probable_prime, keygen_seed, KeyId, KeyPair, ParamSet, PrivateKey, PublicKey, PUBLIC_EXPONENT};
pub use ownership::{
    check_fresh, proof_signature_valid, prove_ownership, Challenge, ChallengeVerifier, OwnershipError,
    OwnershipProof, DEFAULT_CHALLENGE_WINDOW,
};
pub use scalar::{convert, ModScalar};
pub use seal::{open, seal, SealedBox};
pub use signature::Signature;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("unknown parameter set {0:?} (expected toy, compact or desk)")]
    UnknownParamSet(String),
    #[error("parameter set {0} does not fit the scalar type")]
    ParamsTooLarge(ParamSet),
    #[error("malformed public key encoding")]
    MalformedKey,
    #[error("malformed signature value")]
    MalformedSignature,
    #[error("refusing to sign an empty message")]
    EmptyMessage,
    #[error("blinding factor is zero, out of range or shares a factor with the modulus")]
    DegenerateBlindingFactor,
    #[error("value is bound to a different signer key")]
    KeyMismatch,
    #[error("sealed payload failed to open")]
    SealBroken,
    #[error(transparent)]
    Ownership(#[from] OwnershipError),
}
