//! SHA-256 helpers, domain separation and full-domain hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::scalar::ModScalar;

/// Domain-separation tags for everything that gets signed or hashed into a
/// modulus. Distinct tags keep a signature in one role from being replayed
/// in another (a blinded nonce can never double as a blinded credential key).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Plain,
    CredentialKey,
    Nonce,
    Challenge,
    Endorsement,
    Receipt,
    Voucher,
    Object,
    Identifier,
    LedgerEntry,
}

impl Domain {
    pub const fn tag(self) -> &'static [u8] {
        match self {
            Domain::Plain => b"msg:",
            Domain::CredentialKey => b"credkey:",
            Domain::Nonce => b"nonce:",
            Domain::Challenge => b"challenge:",
            Domain::Endorsement => b"endorse:",
            Domain::Receipt => b"receipt:",
            Domain::Voucher => b"voucher:",
            Domain::Object => b"object:",
            Domain::Identifier => b"ident:",
            Domain::LedgerEntry => b"entry:",
        }
    }
}

pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Deterministic generator for a byte-string seed.
pub fn seeded_rng(seed: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(sha256(&[b"rng:", seed]))
}

/// Hashes `message` onto a unit of `Z_n`.
///
/// The digest is expanded to `len(n) + 16` bytes (counter-mode SHA-256) and
/// reduced mod `n`. If the result is not coprime to `n` the outer counter is
/// bumped and the expansion repeated, so the representative is always a
/// unit. That keeps blinding a bijection on `Z_n^*` even at toy sizes.
pub fn hash_to_unit<N: ModScalar>(domain: Domain, message: &[u8], modulus: &N) -> N {
    let len = modulus.bits().div_ceil(8) as usize + 16;
    for attempt in 0u32.. {
        let mut expanded = Vec::with_capacity(len + 32);
        let mut block = 0u32;
        while expanded.len() < len {
            expanded.extend_from_slice(&sha256(&[
                b"fdh:",
                domain.tag(),
                &attempt.to_be_bytes(),
                &block.to_be_bytes(),
                message,
            ]));
            block += 1;
        }
        expanded.truncate(len);
        let candidate = N::reduce_be_bytes(&expanded, modulus);
        if !candidate.is_zero() && candidate.gcd(modulus).is_one() {
            return candidate;
        }
    }
    unreachable!("counter space exhausted")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_integer::Integer;
    use rand::RngCore;

    #[test]
    fn domains_are_distinct() {
        use std::collections::BTreeSet;
        let all = [
            Domain::Plain,
            Domain::CredentialKey,
            Domain::Nonce,
            Domain::Challenge,
            Domain::Endorsement,
            Domain::Receipt,
            Domain::Voucher,
            Domain::Object,
            Domain::Identifier,
            Domain::LedgerEntry,
        ];
        let tags: BTreeSet<_> = all.iter().map(|d| d.tag()).collect();
        assert_eq!(tags.len(), all.len());
    }

    #[test]
    fn hash_to_unit_is_a_unit_and_domain_separated() {
        // 15 * 17: plenty of non-units to trip over
        let n = 255u64;
        for i in 0..200u32 {
            let h = hash_to_unit(Domain::Nonce, &i.to_be_bytes(), &n);
            assert_eq!(h.gcd(&n), 1);
        }
        let big = BigUint::from(1_000_003u64) * BigUint::from(999_983u64);
        let a = hash_to_unit(Domain::Nonce, b"y", &big);
        let b = hash_to_unit(Domain::CredentialKey, b"y", &big);
        assert_ne!(a, b);
    }

    #[test]
    fn scalar_types_agree() {
        let n = 61_837u64;
        let big = BigUint::from(n);
        for i in 0..50u32 {
            let small = hash_to_unit(Domain::Plain, &i.to_le_bytes(), &n);
            let large = hash_to_unit(Domain::Plain, &i.to_le_bytes(), &big);
            assert_eq!(BigUint::from(small), large);
        }
    }

    #[test]
    fn seeded_rng_is_reproducible() {
        let mut a = seeded_rng(b"x");
        let mut b = seeded_rng(b"x");
        let mut c = seeded_rng(b"y");
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(a.next_u64(), c.next_u64());
    }
}
