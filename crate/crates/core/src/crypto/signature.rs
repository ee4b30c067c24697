//! Full-domain-hash RSA signatures.

use super::hash::{hash_to_unit, Domain};
use super::keys::{KeyId, KeyPair, PublicKey};
use super::scalar::ModScalar;
use super::CryptoError;

/// A signature value together with the fingerprint of the key that made it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub signer: KeyId,
    /// Big-endian, padded to the signer's modulus width.
    pub value: Vec<u8>,
}

impl<N: ModScalar> KeyPair<N> {
    /// Signs `message` under `Domain::Plain`.
    pub fn sign(&self, message: &[u8]) -> Result<Signature, CryptoError> {
        self.sign_in(Domain::Plain, message)
    }

    pub fn sign_in(&self, domain: Domain, message: &[u8]) -> Result<Signature, CryptoError> {
        if message.is_empty() {
            return Err(CryptoError::EmptyMessage);
        }
        let representative = hash_to_unit(domain, message, &self.public.modulus);
        Ok(self.sign_residue(&representative))
    }

    /// Raw RSA signature over an element of `Z_n`.
    pub(crate) fn sign_residue(&self, value: &N) -> Signature {
        let s = self.private.apply(value);
        Signature {
            signer: self.key_id,
            value: s.to_be_bytes_padded(self.public.modulus_len()),
        }
    }
}

impl<N: ModScalar> PublicKey<N> {
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        self.verify_in(Domain::Plain, message, signature)
    }

    pub fn verify_in(&self, domain: Domain, message: &[u8], signature: &Signature) -> bool {
        if message.is_empty() {
            return false;
        }
        let representative = hash_to_unit(domain, message, &self.modulus);
        self.verify_residue(&representative, signature)
    }

    /// Checks `s^e == value (mod n)`; used for blind signatures, which sign
    /// a residue rather than a message.
    pub fn verify_residue(&self, value: &N, signature: &Signature) -> bool {
        if signature.signer != self.key_id() {
            return false;
        }
        match self.parse_residue(&signature.value) {
            Some(s) => s.pow_mod(&self.exponent, &self.modulus) == *value,
            None => false,
        }
    }

    /// Parses a padded residue, rejecting values outside `[0, n)`.
    pub fn parse_residue(&self, bytes: &[u8]) -> Option<N> {
        if bytes.len() != self.modulus_len() {
            return None;
        }
        N::from_be_bytes(bytes).filter(|v| *v < self.modulus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::ParamSet;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    fn keys() -> (KeyPair<BigUint>, KeyPair<BigUint>) {
        (
            KeyPair::generate(b"k1", ParamSet::Compact).unwrap(),
            KeyPair::generate(b"k2", ParamSet::Compact).unwrap(),
        )
    }

    #[test]
    fn round_trip_and_rejections() {
        let (k1, k2) = keys();
        let s = k1.sign(b"hello").unwrap();
        assert!(k1.public.verify(b"hello", &s));
        assert!(!k2.public.verify(b"hello", &s));
        assert!(!k1.public.verify(b"hellp", &s));
        assert_eq!(s, k1.sign(b"hello").unwrap());
    }

    #[test]
    fn domains_do_not_cross_verify() {
        let (k1, _) = keys();
        let s = k1.sign_in(Domain::Nonce, b"y").unwrap();
        assert!(k1.public.verify_in(Domain::Nonce, b"y", &s));
        assert!(!k1.public.verify_in(Domain::CredentialKey, b"y", &s));
    }

    #[test]
    fn empty_message_is_refused() {
        let (k1, _) = keys();
        assert!(matches!(k1.sign(b""), Err(CryptoError::EmptyMessage)));
    }

    #[test]
    fn out_of_range_signature_rejected() {
        let (k1, _) = keys();
        let mut s = k1.sign(b"m").unwrap();
        s.value = vec![0xff; s.value.len()];
        assert!(!k1.public.verify(b"m", &s));
        s.value.push(0);
        assert!(!k1.public.verify(b"m", &s));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn toy_sign_verify(seed in any::<[u8; 4]>(), msg in proptest::collection::vec(any::<u8>(), 1..40)) {
            let k = KeyPair::<u64>::generate(&seed, ParamSet::Toy).unwrap();
            let s = k.sign(&msg).unwrap();
            prop_assert!(k.public.verify(&msg, &s));
        }
    }
}
