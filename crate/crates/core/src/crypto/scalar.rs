//! Integer types usable as RSA moduli.
//!
//! The signature and blinding code is written once against [`ModScalar`].
//! `u64` backs the toy parameter set, where the whole blinding domain is small
//! enough to enumerate; [`BigUint`] backs everything else.

use std::fmt::Debug;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::RngCore;

/// Unsigned integer with the modular operations RSA needs.
pub trait ModScalar:
    Clone + Debug + Ord + Eq + Zero + One + Integer + FromPrimitive + ToPrimitive + Send + Sync
{
    /// Largest modulus bit length this type can carry.
    const MAX_MODULUS_BITS: u64;

    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self;

    fn pow_mod(&self, exponent: &Self, modulus: &Self) -> Self;

    /// Multiplicative inverse modulo `modulus`, if one exists.
    fn inv_mod(&self, modulus: &Self) -> Option<Self>;

    fn bits(&self) -> u64;

    /// Big-endian bytes, minimal length (zero encodes as a single `0x00`).
    fn to_be_bytes(&self) -> Vec<u8>;

    /// Parses big-endian bytes; `None` if the value does not fit.
    fn from_be_bytes(bytes: &[u8]) -> Option<Self>;

    /// Big-endian bytes left-padded to `len`.
    fn to_be_bytes_padded(&self, len: usize) -> Vec<u8> {
        let raw = self.to_be_bytes();
        let raw = if raw.len() > 1 && raw[0] == 0 { &raw[1..] } else { &raw[..] };
        if raw.len() >= len {
            return raw.to_vec();
        }
        let mut out = vec![0u8; len - raw.len()];
        out.extend_from_slice(raw);
        out
    }

    /// Reduces an arbitrary-length big-endian byte string modulo `modulus`.
    fn reduce_be_bytes(bytes: &[u8], modulus: &Self) -> Self {
        let base = Self::from_u32(256).expect("256 fits every scalar");
        let mut acc = Self::zero();
        for &b in bytes {
            let digit = Self::from_u8(b).expect("byte fits every scalar");
            acc = (acc.mul_mod(&base, modulus) + digit) % modulus.clone();
        }
        acc
    }

    /// Uniform odd integer of exactly `bits` bits with the top two bits set,
    /// drawn from `ceil(bits / 8)` bytes of `rng` output.
    fn random_prime_candidate<R: RngCore>(rng: &mut R, bits: u64) -> Self {
        let mut bytes = vec![0u8; bits.div_ceil(8) as usize];
        rng.fill_bytes(&mut bytes);
        let excess = (bytes.len() as u64 * 8 - bits) as u32;
        bytes[0] &= 0xffu8.checked_shr(excess).unwrap_or(0);
        // set the top two bits so p*q has exactly 2*bits bits
        let top = bits - 1;
        let top_byte = (bytes.len() as u64 - 1 - top / 8) as usize;
        bytes[top_byte] |= 1 << (top % 8);
        let second = bits - 2;
        let second_byte = (bytes.len() as u64 - 1 - second / 8) as usize;
        bytes[second_byte] |= 1 << (second % 8);
        let last = bytes.len() - 1;
        bytes[last] |= 1;
        Self::from_be_bytes(&bytes).expect("candidate fits scalar")
    }

    /// Uniform integer in `[0, bound)` by rejection sampling over
    /// `bits(bound)`-bit strings.
    fn random_below<R: RngCore>(rng: &mut R, bound: &Self) -> Self {
        let bits = bound.bits();
        let len = bits.div_ceil(8) as usize;
        let excess = (len as u64 * 8 - bits) as u32;
        let mut bytes = vec![0u8; len];
        loop {
            rng.fill_bytes(&mut bytes);
            bytes[0] &= 0xffu8.checked_shr(excess).unwrap_or(0);
            let candidate = Self::from_be_bytes(&bytes).expect("sample fits scalar");
            if &candidate < bound {
                return candidate;
            }
        }
    }
}

impl ModScalar for u64 {
    // products are formed in u128, so any u64 modulus works; the toy set
    // stays far below this
    const MAX_MODULUS_BITS: u64 = 64;

    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        ((*self as u128 * *rhs as u128) % *modulus as u128) as u64
    }

    fn pow_mod(&self, exponent: &Self, modulus: &Self) -> Self {
        if *modulus == 1 {
            return 0;
        }
        let mut result = 1u64;
        let mut base = self % modulus;
        let mut e = *exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_mod(&base, modulus);
            }
            base = base.mul_mod(&base, modulus);
            e >>= 1;
        }
        result
    }

    fn inv_mod(&self, modulus: &Self) -> Option<Self> {
        let (mut old_r, mut r) = (*self as i128 % *modulus as i128, *modulus as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        if old_r != 1 {
            return None;
        }
        Some(old_s.rem_euclid(*modulus as i128) as u64)
    }

    fn bits(&self) -> u64 {
        (64 - self.leading_zeros()) as u64
    }

    fn to_be_bytes(&self) -> Vec<u8> {
        let raw = u64::to_be_bytes(*self);
        let first = raw.iter().position(|&b| b != 0).unwrap_or(7);
        raw[first..].to_vec()
    }

    fn from_be_bytes(bytes: &[u8]) -> Option<Self> {
        let first = bytes.iter().position(|&b| b != 0).unwrap_or(bytes.len());
        let significant = &bytes[first..];
        if significant.len() > 8 {
            return None;
        }
        Some(significant.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64))
    }
}

impl ModScalar for BigUint {
    const MAX_MODULUS_BITS: u64 = u64::MAX;

    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        (self * rhs) % modulus
    }

    fn pow_mod(&self, exponent: &Self, modulus: &Self) -> Self {
        self.modpow(exponent, modulus)
    }

    fn inv_mod(&self, modulus: &Self) -> Option<Self> {
        self.modinv(modulus)
    }

    fn bits(&self) -> u64 {
        BigUint::bits(self)
    }

    fn to_be_bytes(&self) -> Vec<u8> {
        self.to_bytes_be()
    }

    fn from_be_bytes(bytes: &[u8]) -> Option<Self> {
        Some(BigUint::from_bytes_be(bytes))
    }
}

/// Converts between scalar types through big-endian bytes.
pub fn convert<A: ModScalar, B: ModScalar>(value: &A) -> Option<B> {
    B::from_be_bytes(&value.to_be_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn u64_and_biguint_agree_on_modular_ops() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = u64::random_below(&mut rng, &(1 << 40)) | 3;
            let a = u64::random_below(&mut rng, &m);
            let b = u64::random_below(&mut rng, &m);
            let (bm, ba, bb) = (BigUint::from(m), BigUint::from(a), BigUint::from(b));
            assert_eq!(BigUint::from(a.mul_mod(&b, &m)), ba.mul_mod(&bb, &bm));
            assert_eq!(BigUint::from(a.pow_mod(&b, &m)), ba.pow_mod(&bb, &bm));
            assert_eq!(a.inv_mod(&m).map(BigUint::from), ba.inv_mod(&bm));
        }
    }

    #[test]
    fn inverse_round_trips() {
        let m = 3233u64;
        for a in 1..m {
            if let Some(inv) = a.inv_mod(&m) {
                assert_eq!(a.mul_mod(&inv, &m), 1);
            } else {
                assert_ne!(a.gcd(&m), 1);
            }
        }
    }

    #[test]
    fn byte_encoding() {
        assert_eq!(ModScalar::to_be_bytes(&0u64), vec![0]);
        assert_eq!(ModScalar::to_be_bytes(&0x0102u64), vec![1, 2]);
        assert_eq!(<u64 as ModScalar>::from_be_bytes(&[0, 0, 1, 2]), Some(0x0102));
        assert_eq!(<u64 as ModScalar>::from_be_bytes(&[1; 9]), None);
        assert_eq!(0x0102u64.to_be_bytes_padded(4), vec![0, 0, 1, 2]);
        assert_eq!(BigUint::from(0x0102u32).to_be_bytes_padded(3), vec![0, 1, 2]);
    }

    #[test]
    fn reduction_matches_biguint() {
        let bytes: Vec<u8> = (0u8..40).collect();
        let m = 65_521u64;
        let expected = BigUint::from_bytes_be(&bytes) % BigUint::from(m);
        assert_eq!(BigUint::from(u64::reduce_be_bytes(&bytes, &m)), expected);
    }

    #[test]
    fn prime_candidates_have_exact_width() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for bits in [8u64, 13, 64] {
            let c = u64::random_prime_candidate(&mut rng, bits);
            assert_eq!(c.bits(), bits);
            assert_eq!(c & 1, 1);
            assert_eq!((c >> (bits - 2)) & 1, 1);
        }
        let c = BigUint::random_prime_candidate(&mut rng, 300);
        assert_eq!(c.bits(), 300);
    }
}
