use std::collections::BTreeMap;

use num_integer::Integer;
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use unlinkid::crypto::{
    blind, hash_to_unit, prove_ownership, seeded_rng, unblind, BlindingFactor, Challenge, KeyPair as GenericKeyPair,
    PUBLIC_EXPONENT,
};
use unlinkid::{Domain, KeyPair, ParamSet, ToyKeyPair};

fn naive_pow(base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u128;
    let m = m as u128;
    let mut b = base as u128 % m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

fn trial_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// Independent toy keygen: same seed derivation and candidate rules, with
/// primality by trial division and the private exponent by search.
fn oracle_toy_keygen(seed: &[u8]) -> (u64, u64, u64, u64) {
    let mut h = Sha256::new();
    h.update(b"rng:");
    h.update(b"keygen:toy:");
    h.update(seed);
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    let e = u64::from(PUBLIC_EXPONENT);
    let mut draw = |avoid: Option<u64>| loop {
        let mut b = [0u8; 1];
        rng.fill_bytes(&mut b);
        let c = u64::from(b[0] | 0b1100_0001);
        if Some(c) == avoid || (c - 1).gcd(&e) != 1 {
            continue;
        }
        if trial_prime(c) {
            return c;
        }
    };
    let p = draw(None);
    let q = draw(Some(p));
    let phi = (p - 1) * (q - 1);
    let d = (1..phi).find(|d| (e % phi) * d % phi == 1).expect("e invertible");
    (p, q, p * q, d)
}

fn toy_modulus(k: &ToyKeyPair) -> u64 {
    k.public.modulus
}

#[test]
fn toy_keygen_matches_independent_oracle() {
    for i in 0u32..64 {
        let seed = format!("oracle-{i}");
        let (p, q, n, d) = oracle_toy_keygen(seed.as_bytes());
        let k = ToyKeyPair::generate(seed.as_bytes(), ParamSet::Toy).unwrap();
        assert_eq!(toy_modulus(&k), n, "seed {seed}: p={p} q={q}");
        assert_eq!(k.public.exponent, u64::from(PUBLIC_EXPONENT));
        assert_eq!(n.leading_zeros(), 48, "modulus is exactly 16 bits");
        // the signature is H(m)^d for the oracle's d
        let m = format!("message {i}");
        let s = k.sign(m.as_bytes()).unwrap();
        let rep = hash_to_unit(Domain::Plain, m.as_bytes(), &n);
        let expected = naive_pow(rep, d, n);
        assert_eq!(s.value, expected.to_be_bytes()[6..].to_vec());
    }
}

fn toy_key() -> ToyKeyPair {
    ToyKeyPair::generate(b"exhaustive", ParamSet::Toy).unwrap()
}

fn units(n: u64) -> impl Iterator<Item = u64> {
    (1..n).filter(move |r| r.gcd(&n) == 1)
}

#[test]
fn toy_blinding_is_perfect_by_enumeration() {
    let k = toy_key();
    let n = toy_modulus(&k);
    let messages: [&[u8]; 4] = [b"alpha", b"beta", b"gamma", b"delta"];
    let mut per_message = Vec::new();
    for m in messages {
        let mut counts: BTreeMap<u64, u32> = BTreeMap::new();
        for r in units(n) {
            let f = BlindingFactor::new(r, &k.public).unwrap();
            let b = blind(Domain::CredentialKey, m, &f, &k.public).unwrap();
            *counts.entry(b.value).or_default() += 1;
        }
        per_message.push(counts);
    }
    let unit_count = units(n).count();
    for counts in &per_message {
        assert_eq!(counts.len(), unit_count, "every unit is reachable");
        assert!(counts.values().all(|&c| c == 1));
    }
    for c in &per_message[1..] {
        assert_eq!(c, &per_message[0], "each blinded value is equally consistent with each message");
    }
}

#[test]
fn toy_unblind_inverts_blinding_by_enumeration() {
    let k = toy_key();
    let n = toy_modulus(&k);
    let m = b"unblind-me";
    let direct = k.sign_in(Domain::CredentialKey, m).unwrap();
    for r in units(n) {
        let f = BlindingFactor::new(r, &k.public).unwrap();
        let b = blind(Domain::CredentialKey, m, &f, &k.public).unwrap();
        let s = unblind(&k.sign_blinded(&b).unwrap(), &f, &k.public).unwrap();
        assert_eq!(s, direct, "factor {r}");
    }
}

#[test]
fn degenerate_factors_are_refused() {
    let k = toy_key();
    let n = toy_modulus(&k);
    assert!(BlindingFactor::new(0, &k.public).is_err());
    assert!(BlindingFactor::new(n, &k.public).is_err());
    let p = (2..n).find(|d| n % d == 0).unwrap();
    assert!(BlindingFactor::new(p, &k.public).is_err());
}

fn compact_keys() -> &'static [KeyPair] {
    use std::sync::OnceLock;
    static KEYS: OnceLock<Vec<KeyPair>> = OnceLock::new();
    KEYS.get_or_init(|| (0u8..3).map(|i| KeyPair::generate(&[b'k', i], ParamSet::Compact).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blind_sign_unblind_verifies(msg in proptest::collection::vec(any::<u8>(), 1..64), seed in any::<u64>(), ki in 0usize..3) {
        let k = &compact_keys()[ki];
        let mut rng = seeded_rng(&seed.to_be_bytes());
        let f = BlindingFactor::random(&mut rng, &k.public);
        let b = blind(Domain::CredentialKey, &msg, &f, &k.public).unwrap();
        let s = unblind(&k.sign_blinded(&b).unwrap(), &f, &k.public).unwrap();
        prop_assert!(k.public.verify_in(Domain::CredentialKey, &msg, &s));
        prop_assert!(!k.public.verify_in(Domain::Plain, &msg, &s));
    }

    #[test]
    fn wrong_factor_does_not_verify(msg in proptest::collection::vec(any::<u8>(), 1..64), seed in any::<u64>()) {
        let k = &compact_keys()[0];
        let mut rng = seeded_rng(&seed.to_be_bytes());
        let f = BlindingFactor::random(&mut rng, &k.public);
        let g = BlindingFactor::random(&mut rng, &k.public);
        prop_assume!(f != g);
        let b = blind(Domain::CredentialKey, &msg, &f, &k.public).unwrap();
        let s = unblind(&k.sign_blinded(&b).unwrap(), &g, &k.public).unwrap();
        prop_assert!(!k.public.verify_in(Domain::CredentialKey, &msg, &s));
    }

    #[test]
    fn signatures_do_not_cross_keys(msg in proptest::collection::vec(any::<u8>(), 1..64)) {
        let [a, b, _] = compact_keys() else { unreachable!() };
        let s = a.sign(&msg).unwrap();
        prop_assert!(a.public.verify(&msg, &s));
        prop_assert!(!b.public.verify(&msg, &s));
    }

    #[test]
    fn keygen_is_deterministic(seed in proptest::collection::vec(any::<u8>(), 0..16)) {
        let a = ToyKeyPair::generate(&seed, ParamSet::Toy).unwrap();
        let b = ToyKeyPair::generate(&seed, ParamSet::Toy).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn two_users_unblind_only_their_own() {
    let k = &compact_keys()[1];
    let mut rng = seeded_rng(b"two-users");
    let (fa, fb) = (BlindingFactor::random(&mut rng, &k.public), BlindingFactor::random(&mut rng, &k.public));
    let ba = blind(Domain::CredentialKey, b"alice-key", &fa, &k.public).unwrap();
    let bb = blind(Domain::CredentialKey, b"bob-key", &fb, &k.public).unwrap();
    let (sa, sb) = (k.sign_blinded(&ba).unwrap(), k.sign_blinded(&bb).unwrap());
    assert!(k.public.verify_in(Domain::CredentialKey, b"alice-key", &unblind(&sa, &fa, &k.public).unwrap()));
    assert!(k.public.verify_in(Domain::CredentialKey, b"bob-key", &unblind(&sb, &fb, &k.public).unwrap()));
    assert!(!k.public.verify_in(Domain::CredentialKey, b"alice-key", &unblind(&sa, &fb, &k.public).unwrap()));
    assert!(!k.public.verify_in(Domain::CredentialKey, b"bob-key", &unblind(&sb, &fa, &k.public).unwrap()));
}

#[test]
fn ownership_proof_binds_challenge_and_key() {
    let owner = &compact_keys()[2];
    let other = &compact_keys()[0];
    let proof = prove_ownership(owner, Challenge([7; 32]));
    assert!(unlinkid::crypto::proof_signature_valid(&owner.public, &proof));
    assert!(!unlinkid::crypto::proof_signature_valid(&other.public, &proof));
}

#[test]
fn toy_keys_agree_with_bigint_keys() {
    let a = ToyKeyPair::generate(b"same", ParamSet::Toy).unwrap();
    let b = GenericKeyPair::<num_bigint::BigUint>::generate(b"same", ParamSet::Toy).unwrap();
    assert_eq!(a.public.modulus, b.public.modulus.to_u64_digits()[0]);
    assert_eq!(a.key_id, b.key_id);
}
