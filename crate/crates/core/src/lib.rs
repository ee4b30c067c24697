//! Decentralised identity protocols over a simulated append-only ledger.
//!
//! The arithmetic layer ([`crypto`]) is generic over [`crypto::ModScalar`] so
//! toy-sized keys can run on `u64` for exhaustive checks. Everything above it
//! uses arbitrary-precision keys through the aliases below.

pub mod actors;
pub mod crypto;
pub mod harness;
pub mod ledger;
pub mod wire;

use num_bigint::BigUint;

pub type Scalar = BigUint;
pub type KeyPair = crypto::KeyPair<BigUint>;
pub type PublicKey = crypto::PublicKey<BigUint>;
pub type BlindingFactor = crypto::BlindingFactor<BigUint>;
pub type BlindedMessage = crypto::BlindedMessage<BigUint>;

pub type ToyKeyPair = crypto::KeyPair<u64>;
pub type ToyPublicKey = crypto::PublicKey<u64>;
pub type ToyBlindingFactor = crypto::BlindingFactor<u64>;

pub use crypto::{CryptoError, Domain, KeyId, ParamSet, Signature};
