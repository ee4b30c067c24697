//! Challenge-response proof that a party holds a private key.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use super::hash::Domain;
use super::keys::{KeyId, KeyPair, PublicKey};
use super::scalar::ModScalar;
use super::signature::Signature;

pub const DEFAULT_CHALLENGE_WINDOW: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Challenge(pub [u8; 32]);

impl Challenge {
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut c = [0u8; 32];
        rng.fill_bytes(&mut c);
        Challenge(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnershipProof {
    pub key_id: KeyId,
    pub challenge: Challenge,
    pub response: Signature,
}

pub fn prove_ownership<N: ModScalar>(key: &KeyPair<N>, challenge: Challenge) -> OwnershipProof {
    OwnershipProof {
        key_id: key.key_id,
        challenge,
        response: key
            .sign_in(Domain::Challenge, &challenge.0)
            .expect("challenge is non-empty"),
    }
}

/// Checks only the signature; freshness and replay are the verifier's job.
pub fn proof_signature_valid<N: ModScalar>(public: &PublicKey<N>, proof: &OwnershipProof) -> bool {
    proof.key_id == public.key_id()
        && proof.response.signer == proof.key_id
        && public.verify_in(Domain::Challenge, &proof.challenge.0, &proof.response)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum OwnershipError {
    #[error("challenge was never issued by this verifier")]
    UnknownChallenge,
    #[error("challenge already answered")]
    Replayed,
    #[error("challenge expired")]
    Stale,
    #[error("proof does not verify under the claimed key")]
    BadProof,
}

/// Verifier-side state: issued challenges and a replay cache.
#[derive(Debug, Clone)]
pub struct ChallengeVerifier {
    window: u64,
    issued: BTreeMap<Challenge, u64>,
    answered: BTreeSet<Challenge>,
}

impl Default for ChallengeVerifier {
    fn default() -> Self {
        Self::new(DEFAULT_CHALLENGE_WINDOW)
    }
}

impl ChallengeVerifier {
    pub fn new(window: u64) -> Self {
        ChallengeVerifier { window, issued: BTreeMap::new(), answered: BTreeSet::new() }
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn issue<R: RngCore>(&mut self, rng: &mut R, now: u64) -> Challenge {
        let c = Challenge::random(rng);
        self.issued.insert(c, now);
        c
    }

    /// Accepts iff the proof answers a challenge this verifier issued within
    /// the freshness window, that challenge has not been answered before, and
    /// the response is a signature by the claimed key over exactly that
    /// challenge. Any outcome consumes the challenge.
    pub fn verify<N: ModScalar>(
        &mut self,
        public: &PublicKey<N>,
        proof: &OwnershipProof,
        now: u64,
    ) -> Result<(), OwnershipError> {
        let issued_at = *self.issued.get(&proof.challenge).ok_or(OwnershipError::UnknownChallenge)?;
        if !self.answered.insert(proof.challenge) {
            return Err(OwnershipError::Replayed);
        }
        check_fresh(issued_at, now, self.window)?;
        if !proof_signature_valid(public, proof) {
            return Err(OwnershipError::BadProof);
        }
        Ok(())
    }
}

/// A challenge issued at `issued_at` is fresh while `now - issued_at <= window`.
pub fn check_fresh(issued_at: u64, now: u64, window: u64) -> Result<(), OwnershipError> {
    if now.saturating_sub(issued_at) > window {
        Err(OwnershipError::Stale)
    } else {
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{seeded_rng, ParamSet};
    use num_bigint::BigUint;

    fn setup() -> (KeyPair<BigUint>, ChallengeVerifier, rand_chacha::ChaCha20Rng) {
        (
            KeyPair::generate(b"holder", ParamSet::Compact).unwrap(),
            ChallengeVerifier::default(),
            seeded_rng(b"verifier"),
        )
    }

    #[test]
    fn fresh_challenge_accepts() {
        let (k, mut v, mut rng) = setup();
        let c = v.issue(&mut rng, 0);
        assert_eq!(v.verify(&k.public, &prove_ownership(&k, c), 3), Ok(()));
    }

    #[test]
    fn replay_rejected() {
        let (k, mut v, mut rng) = setup();
        let c = v.issue(&mut rng, 0);
        let proof = prove_ownership(&k, c);
        v.verify(&k.public, &proof, 0).unwrap();
        assert_eq!(v.verify(&k.public, &proof, 0), Err(OwnershipError::Replayed));
    }

    #[test]
    fn proof_for_other_challenge_rejected() {
        let (k, mut v, mut rng) = setup();
        let c = v.issue(&mut rng, 0);
        let c2 = v.issue(&mut rng, 0);
        let mut proof = prove_ownership(&k, c);
        proof.challenge = c2;
        assert_eq!(v.verify(&k.public, &proof, 0), Err(OwnershipError::BadProof));
    }

    #[test]
    fn unknown_and_stale() {
        let (k, mut v, mut rng) = setup();
        let unissued = Challenge::random(&mut rng);
        assert_eq!(
            v.verify(&k.public, &prove_ownership(&k, unissued), 0),
            Err(OwnershipError::UnknownChallenge)
        );
        let c = v.issue(&mut rng, 10);
        assert_eq!(
            v.verify(&k.public, &prove_ownership(&k, c), 10 + DEFAULT_CHALLENGE_WINDOW + 1),
            Err(OwnershipError::Stale)
        );
        let c = v.issue(&mut rng, 10);
        assert!(v.verify(&k.public, &prove_ownership(&k, c), 10 + DEFAULT_CHALLENGE_WINDOW).is_ok());
    }

    #[test]
    fn wrong_key_rejected() {
        let (k, mut v, mut rng) = setup();
        let other = KeyPair::<BigUint>::generate(b"other", ParamSet::Compact).unwrap();
        let c = v.issue(&mut rng, 0);
        assert_eq!(
            v.verify(&k.public, &prove_ownership(&other, c), 0),
            Err(OwnershipError::BadProof)
        );
    }
}
