//! Chaum-style RSA blinding over full-domain-hashed messages.
//!
//! `blind(m, r) = H(m) * r^e mod n`. The signer returns `blind^d`, and the
//! holder of `r` recovers `H(m)^d` by multiplying with `r^-1`. Because
//! `r -> r^e` permutes `Z_n^*`, every blinded value is reachable from every
//! message by exactly one factor.

use rand::RngCore;

use super::hash::{hash_to_unit, Domain};
use super::keys::{KeyId, KeyPair, PublicKey};
use super::scalar::ModScalar;
use super::signature::Signature;
use super::CryptoError;

/// Secret multiplier that masks a message for one signer key.
///
/// Valid factors are exactly the units of `Z_n`: zero and values sharing a
/// factor with `n` are refused because they either destroy the message or
/// cannot be inverted during unblinding.
#[derive(Clone, PartialEq, Eq)]
pub struct BlindingFactor<N> {
    value: N,
    signer: KeyId,
}

impl<N> std::fmt::Debug for BlindingFactor<N> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BlindingFactor(for {:?})", self.signer)
    }
}

impl<N: ModScalar> BlindingFactor<N> {
    pub fn new(value: N, signer: &PublicKey<N>) -> Result<Self, CryptoError> {
        if value.is_zero() || value >= signer.modulus || !value.gcd(&signer.modulus).is_one() {
            return Err(CryptoError::DegenerateBlindingFactor);
        }
        Ok(BlindingFactor { value, signer: signer.key_id() })
    }

    /// Uniform over the units of `Z_n`.
    pub fn random<R: RngCore>(rng: &mut R, signer: &PublicKey<N>) -> Self {
        loop {
            let candidate = N::random_below(rng, &signer.modulus);
            if let Ok(f) = Self::new(candidate, signer) {
                return f;
            }
        }
    }

    pub fn value(&self) -> &N {
        &self.value
    }

    pub fn signer(&self) -> KeyId {
        self.signer
    }
}

/// A masked message addressed to one signer key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindedMessage<N> {
    pub value: N,
    pub signer: KeyId,
}

impl<N: ModScalar> BlindedMessage<N> {
    /// Padded big-endian encoding, as carried in messages and on the ledger.
    pub fn to_bytes(&self, signer: &PublicKey<N>) -> Vec<u8> {
        self.value.to_be_bytes_padded(signer.modulus_len())
    }

    pub fn from_bytes(bytes: &[u8], signer: &PublicKey<N>) -> Option<Self> {
        signer
            .parse_residue(bytes)
            .map(|value| BlindedMessage { value, signer: signer.key_id() })
    }
}

/// Masks the domain-separated hash of `message` for `signer`.
pub fn blind<N: ModScalar>(
    domain: Domain,
    message: &[u8],
    factor: &BlindingFactor<N>,
    signer: &PublicKey<N>,
) -> Result<BlindedMessage<N>, CryptoError> {
    if factor.signer != signer.key_id() {
        return Err(CryptoError::KeyMismatch);
    }
    let representative = hash_to_unit(domain, message, &signer.modulus);
    Ok(blind_residue(&representative, factor, signer))
}

pub(crate) fn blind_residue<N: ModScalar>(
    representative: &N,
    factor: &BlindingFactor<N>,
    signer: &PublicKey<N>,
) -> BlindedMessage<N> {
    let mask = factor.value.pow_mod(&signer.exponent, &signer.modulus);
    BlindedMessage {
        value: representative.mul_mod(&mask, &signer.modulus),
        signer: signer.key_id(),
    }
}

impl<N: ModScalar> KeyPair<N> {
    /// Signs a blinded value. The signer sees `blinded.value` and nothing
    /// else.
    pub fn sign_blinded(&self, blinded: &BlindedMessage<N>) -> Result<Signature, CryptoError> {
        if blinded.signer != self.key_id || blinded.value >= self.public.modulus {
            return Err(CryptoError::KeyMismatch);
        }
        Ok(self.sign_residue(&blinded.value))
    }
}

/// Removes the mask from a blind signature. A wrong factor still produces a
/// value; it simply fails verification.
pub fn unblind<N: ModScalar>(
    blind_signature: &Signature,
    factor: &BlindingFactor<N>,
    signer: &PublicKey<N>,
) -> Result<Signature, CryptoError> {
    if factor.signer != signer.key_id() || blind_signature.signer != signer.key_id() {
        return Err(CryptoError::KeyMismatch);
    }
    let s = signer
        .parse_residue(&blind_signature.value)
        .ok_or(CryptoError::MalformedSignature)?;
    let inverse = factor
        .value
        .inv_mod(&signer.modulus)
        .expect("factor is a unit by construction");
    Ok(Signature {
        signer: signer.key_id(),
        value: s
            .mul_mod(&inverse, &signer.modulus)
            .to_be_bytes_padded(signer.modulus_len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{seeded_rng, ParamSet};
    use num_bigint::BigUint;
    use proptest::prelude::*;

    #[test]
    fn blind_sign_unblind_verifies() {
        let k = KeyPair::<BigUint>::generate(b"signer", ParamSet::Compact).unwrap();
        let mut rng = seeded_rng(b"user");
        let r = BlindingFactor::random(&mut rng, &k.public);
        let b = blind(Domain::Nonce, b"y", &r, &k.public).unwrap();
        let s = unblind(&k.sign_blinded(&b).unwrap(), &r, &k.public).unwrap();
        assert!(k.public.verify_in(Domain::Nonce, b"y", &s));
        // unblinded signature equals the direct one: FDH-RSA is deterministic
        assert_eq!(s, k.sign_in(Domain::Nonce, b"y").unwrap());
    }

    #[test]
    fn different_factors_give_different_blinds() {
        let k = KeyPair::<BigUint>::generate(b"signer", ParamSet::Compact).unwrap();
        let mut rng = seeded_rng(b"user");
        let r1 = BlindingFactor::random(&mut rng, &k.public);
        let r2 = BlindingFactor::random(&mut rng, &k.public);
        assert_ne!(r1, r2);
        assert_ne!(
            blind(Domain::Plain, b"m", &r1, &k.public).unwrap(),
            blind(Domain::Plain, b"m", &r2, &k.public).unwrap()
        );
    }

    #[test]
    fn wrong_factor_fails_verification() {
        let k = KeyPair::<BigUint>::generate(b"signer", ParamSet::Compact).unwrap();
        let mut rng = seeded_rng(b"user");
        let r = BlindingFactor::random(&mut rng, &k.public);
        let wrong = BlindingFactor::random(&mut rng, &k.public);
        let b = blind(Domain::Plain, b"m", &r, &k.public).unwrap();
        let s = unblind(&k.sign_blinded(&b).unwrap(), &wrong, &k.public).unwrap();
        assert!(!k.public.verify(b"m", &s));
    }

    #[test]
    fn mismatched_key_is_refused() {
        let k1 = KeyPair::<BigUint>::generate(b"one", ParamSet::Compact).unwrap();
        let k2 = KeyPair::<BigUint>::generate(b"two", ParamSet::Compact).unwrap();
        let mut rng = seeded_rng(b"user");
        let r = BlindingFactor::random(&mut rng, &k1.public);
        let b = blind(Domain::Plain, b"m", &r, &k1.public).unwrap();
        assert!(matches!(k2.sign_blinded(&b), Err(CryptoError::KeyMismatch)));
        assert!(matches!(
            blind(Domain::Plain, b"m", &r, &k2.public),
            Err(CryptoError::KeyMismatch)
        ));
    }

    #[test]
    fn degenerate_factors_rejected() {
        let k = KeyPair::<u64>::generate(b"toy", ParamSet::Toy).unwrap();
        let n = k.public.modulus;
        let p = k.private.p;
        assert!(BlindingFactor::new(0, &k.public).is_err());
        assert!(BlindingFactor::new(p, &k.public).is_err());
        assert!(BlindingFactor::new(n, &k.public).is_err());
        assert!(BlindingFactor::new(n + 5, &k.public).is_err());
        assert!(BlindingFactor::new(n - 1, &k.public).is_ok());
    }

    #[test]
    fn two_users_unblind_only_their_own() {
        let k = KeyPair::<BigUint>::generate(b"signer", ParamSet::Compact).unwrap();
        let mut alice = seeded_rng(b"alice");
        let mut bob = seeded_rng(b"bob");
        let ra = BlindingFactor::random(&mut alice, &k.public);
        let rb = BlindingFactor::random(&mut bob, &k.public);
        let ba = blind(Domain::CredentialKey, b"xa", &ra, &k.public).unwrap();
        let bb = blind(Domain::CredentialKey, b"xb", &rb, &k.public).unwrap();
        let sa = k.sign_blinded(&ba).unwrap();
        let sb = k.sign_blinded(&bb).unwrap();
        let ok = |sig: &Signature, r: &BlindingFactor<BigUint>, m: &[u8]| {
            k.public
                .verify_in(Domain::CredentialKey, m, &unblind(sig, r, &k.public).unwrap())
        };
        assert!(ok(&sa, &ra, b"xa"));
        assert!(ok(&sb, &rb, b"xb"));
        assert!(!ok(&sa, &rb, b"xb"));
        assert!(!ok(&sb, &ra, b"xa"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn correctness_identity_toy(seed in any::<[u8; 4]>(), user in any::<u64>(), msg in proptest::collection::vec(any::<u8>(), 1..24)) {
            let k = KeyPair::<u64>::generate(&seed, ParamSet::Toy).unwrap();
            let mut rng = seeded_rng(&user.to_be_bytes());
            let r = BlindingFactor::random(&mut rng, &k.public);
            let b = blind(Domain::Plain, &msg, &r, &k.public).unwrap();
            let s = unblind(&k.sign_blinded(&b).unwrap(), &r, &k.public).unwrap();
            prop_assert!(k.public.verify(&msg, &s));
        }
    }
}
