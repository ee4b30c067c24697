//! Key generation and key fingerprints.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use super::hash::{seeded_rng, sha256};
use super::scalar::ModScalar;
use super::CryptoError;

pub const PUBLIC_EXPONENT: u32 = 65_537;

/// Modulus size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamSet {
    /// 16-bit moduli; small enough to enumerate every blinding factor.
    Toy,
    /// 512-bit moduli for fast test-scale scenario runs.
    Compact,
    /// 2048-bit moduli, the runtime default.
    Desk,
}

impl ParamSet {
    pub const fn prime_bits(self) -> u64 {
        match self {
            ParamSet::Toy => 8,
            ParamSet::Compact => 256,
            ParamSet::Desk => 1024,
        }
    }

    pub const fn modulus_bits(self) -> u64 {
        self.prime_bits() * 2
    }

    pub const fn name(self) -> &'static str {
        match self {
            ParamSet::Toy => "toy",
            ParamSet::Compact => "compact",
            ParamSet::Desk => "desk",
        }
    }

    /// Toy and compact keys are for tests and test-scale scenarios only.
    pub const fn is_test_only(self) -> bool {
        !matches!(self, ParamSet::Desk)
    }
}

impl fmt::Display for ParamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamSet {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "toy" => Ok(ParamSet::Toy),
            "compact" => Ok(ParamSet::Compact),
            "desk" => Ok(ParamSet::Desk),
            other => Err(CryptoError::UnknownParamSet(other.to_string())),
        }
    }
}

/// SHA-256 fingerprint of a public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; 32]);

impl KeyId {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(KeyId)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight hex digits, for logs and reports.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", self.short())
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey<N> {
    pub modulus: N,
    pub exponent: N,
}

impl<N: ModScalar> PublicKey<N> {
    /// Canonical encoding: length-prefixed modulus then exponent.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for part in [self.modulus.to_be_bytes(), self.exponent.to_be_bytes()] {
            out.extend_from_slice(&(part.len() as u32).to_be_bytes());
            out.extend_from_slice(&part);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut rest = bytes;
        let mut parts = Vec::with_capacity(2);
        for _ in 0..2 {
            if rest.len() < 4 {
                return Err(CryptoError::MalformedKey);
            }
            let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
            rest = &rest[4..];
            if rest.len() < len {
                return Err(CryptoError::MalformedKey);
            }
            parts.push(N::from_be_bytes(&rest[..len]).ok_or(CryptoError::MalformedKey)?);
            rest = &rest[len..];
        }
        if !rest.is_empty() {
            return Err(CryptoError::MalformedKey);
        }
        let exponent = parts.pop().unwrap();
        let modulus = parts.pop().unwrap();
        if modulus <= N::one() || exponent <= N::one() {
            return Err(CryptoError::MalformedKey);
        }
        Ok(PublicKey { modulus, exponent })
    }

    pub fn key_id(&self) -> KeyId {
        KeyId(sha256(&[b"keyid:", &self.to_bytes()]))
    }

    /// Width of signatures and blinded values under this key.
    pub fn modulus_len(&self) -> usize {
        self.modulus.bits().div_ceil(8) as usize
    }
}

/// RSA private exponent with CRT components.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey<N> {
    pub(crate) exponent: N,
    pub(crate) p: N,
    pub(crate) q: N,
    pub(crate) dp: N,
    pub(crate) dq: N,
    pub(crate) qinv: N,
}

impl<N> fmt::Debug for PrivateKey<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

impl<N: ModScalar> PrivateKey<N> {
    /// `value^d mod n` via the CRT.
    pub(crate) fn apply(&self, value: &N) -> N {
        let m1 = value.pow_mod(&self.dp, &self.p);
        let m2 = value.pow_mod(&self.dq, &self.q);
        // h = qinv * (m1 - m2) mod p
        let diff = if m1 >= m2 {
            m1 - m2.clone()
        } else {
            (m1 + self.p.clone()) - (m2.clone() % self.p.clone())
        };
        let h = self.qinv.mul_mod(&(diff % self.p.clone()), &self.p);
        m2 + h * self.q.clone()
    }

    /// Every secret component, big-endian. Used by view-soundness scans.
    pub fn secret_material(&self) -> Vec<Vec<u8>> {
        [&self.exponent, &self.p, &self.q, &self.dp, &self.dq]
            .into_iter()
            .map(|v| v.to_be_bytes())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair<N> {
    pub public: PublicKey<N>,
    pub private: PrivateKey<N>,
    pub key_id: KeyId,
}

impl<N: ModScalar> KeyPair<N> {
    /// Deterministic key generation: identical `(seed, params)` pairs always
    /// yield the identical key.
    pub fn generate(seed: &[u8], params: ParamSet) -> Result<Self, CryptoError> {
        if params.modulus_bits() > N::MAX_MODULUS_BITS {
            return Err(CryptoError::ParamsTooLarge(params));
        }
        let mut rng = seeded_rng(&keygen_seed(seed, params));
        let e = N::from_u32(PUBLIC_EXPONENT).expect("exponent fits");
        let p = next_prime(&mut rng, params.prime_bits(), &e, None);
        let q = next_prime(&mut rng, params.prime_bits(), &e, Some(&p));
        Ok(Self::from_primes(p, q, e))
    }

    pub(crate) fn from_primes(p: N, q: N, e: N) -> Self {
        let one = N::one();
        let n = p.clone() * q.clone();
        let phi = (p.clone() - one.clone()) * (q.clone() - one.clone());
        let d = e.inv_mod(&phi).expect("e coprime to phi by construction");
        let dp = d.clone() % (p.clone() - one.clone());
        let dq = d.clone() % (q.clone() - one.clone());
        let qinv = q.inv_mod(&p).expect("distinct primes");
        let public = PublicKey { modulus: n, exponent: e };
        let key_id = public.key_id();
        KeyPair {
            public,
            private: PrivateKey { exponent: d, p, q, dp, dq, qinv },
            key_id,
        }
    }
}

/// Seed material fed to the keygen generator.
pub fn keygen_seed(seed: &[u8], params: ParamSet) -> Vec<u8> {
    let mut s = b"keygen:".to_vec();
    s.extend_from_slice(params.name().as_bytes());
    s.push(b':');
    s.extend_from_slice(seed);
    s
}

fn next_prime<N: ModScalar, R: RngCore>(rng: &mut R, bits: u64, e: &N, avoid: Option<&N>) -> N {
    loop {
        let candidate = N::random_prime_candidate(rng, bits);
        if Some(&candidate) == avoid {
            continue;
        }
        if !(candidate.clone() - N::one()).gcd(e).is_one() {
            continue;
        }
        if is_probable_prime(&candidate) {
            return candidate;
        }
    }
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Trial division by the primes below 256, then Miller-Rabin. Values below
/// 2^64 use the deterministic base set; larger ones use 24 bases derived
/// from a hash of the candidate, so primality testing never consumes the
/// caller's generator.
pub fn is_probable_prime<N: ModScalar>(n: &N) -> bool {
    let two = N::from_u32(2).unwrap();
    if *n < two {
        return false;
    }
    for &sp in &SMALL_PRIMES {
        let sp = N::from_u32(sp).unwrap();
        if *n == sp {
            return true;
        }
        if (n.clone() % sp).is_zero() {
            return false;
        }
    }
    let one = N::one();
    let n_minus_1 = n.clone() - one.clone();
    let mut d = n_minus_1.clone();
    let mut s = 0u32;
    while d.is_even() {
        d = d / two.clone();
        s += 1;
    }
    let witness = |a: &N| -> bool {
        let mut x = a.pow_mod(&d, n);
        if x == one || x == n_minus_1 {
            return true;
        }
        for _ in 1..s {
            x = x.mul_mod(&x, n);
            if x == n_minus_1 {
                return true;
            }
        }
        false
    };
    if n.bits() <= 64 {
        const BASES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
        return BASES.iter().all(|&b| {
            let a = N::from_u32(b).unwrap() % n.clone();
            a.is_zero() || witness(&a)
        });
    }
    let three = N::from_u32(3).unwrap();
    let span = n.clone() - three; // bases drawn from [2, n-2]
    let n_bytes = n.to_be_bytes();
    (0u32..24).all(|i| {
        let digest = sha256(&[b"mr-base:", &n_bytes, &i.to_be_bytes()]);
        let a = N::reduce_be_bytes(&digest, &span) + two.clone();
        witness(&a)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_traits::One;

    #[test]
    fn keygen_is_deterministic_and_seed_sensitive() {
        let a = KeyPair::<u64>::generate(b"a", ParamSet::Toy).unwrap();
        let a2 = KeyPair::<u64>::generate(b"a", ParamSet::Toy).unwrap();
        let b = KeyPair::<u64>::generate(b"b", ParamSet::Toy).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.key_id, b.key_id);
        assert!(a.public.modulus < 1 << 16);
        assert!(a.public.modulus >= 1 << 15);
    }

    #[test]
    fn toy_keys_agree_across_scalar_types() {
        for seed in [&b"a"[..], b"b", b"c"] {
            let small = KeyPair::<u64>::generate(seed, ParamSet::Toy).unwrap();
            let big = KeyPair::<BigUint>::generate(seed, ParamSet::Toy).unwrap();
            assert_eq!(BigUint::from(small.public.modulus), big.public.modulus);
            assert_eq!(small.key_id, big.key_id);
        }
    }

    #[test]
    fn u64_rejects_oversized_params() {
        assert!(matches!(
            KeyPair::<u64>::generate(b"x", ParamSet::Compact),
            Err(CryptoError::ParamsTooLarge(ParamSet::Compact))
        ));
    }

    #[test]
    fn compact_modulus_width() {
        let k = KeyPair::<BigUint>::generate(b"compact", ParamSet::Compact).unwrap();
        assert_eq!(k.public.modulus.bits(), 512);
        assert_eq!(k.public.modulus_len(), 64);
    }

    #[test]
    fn primality_matches_sieve_below_ten_thousand() {
        let limit = 10_000usize;
        let mut sieve = vec![true; limit];
        sieve[0] = false;
        sieve[1] = false;
        for i in 2..limit {
            if sieve[i] {
                for j in (i * i..limit).step_by(i) {
                    sieve[j] = false;
                }
            }
        }
        for (i, &p) in sieve.iter().enumerate() {
            assert_eq!(is_probable_prime(&(i as u64)), p, "{i}");
        }
    }

    #[test]
    fn known_large_prime_and_composite() {
        // 2^127 - 1 is prime; 2^128 + 1 is not
        let m127 = (BigUint::one() << 127u32) - BigUint::one();
        assert!(is_probable_prime(&m127));
        let f7 = (BigUint::one() << 128u32) + BigUint::one();
        assert!(!is_probable_prime(&f7));
        // Carmichael number
        assert!(!is_probable_prime(&561u64));
    }

    #[test]
    fn public_key_bytes_round_trip() {
        let k = KeyPair::<BigUint>::generate(b"rt", ParamSet::Toy).unwrap();
        let bytes = k.public.to_bytes();
        assert_eq!(PublicKey::<BigUint>::from_bytes(&bytes).unwrap(), k.public);
        assert!(PublicKey::<BigUint>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(PublicKey::<BigUint>::from_bytes(&extra).is_err());
    }

    #[test]
    fn param_names_parse() {
        for p in [ParamSet::Toy, ParamSet::Compact, ParamSet::Desk] {
            assert_eq!(p.name().parse::<ParamSet>().unwrap(), p);
        }
        assert!("huge".parse::<ParamSet>().is_err());
    }
}
