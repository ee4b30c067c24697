//! Encrypts a payload to an RSA public key (RSA-KEM with a SHA-256
//! keystream and hash tag). Only used to keep identity payloads opaque to
//! every party except the certification provider.

use rand::RngCore;

use super::hash::sha256;
use super::keys::{KeyId, KeyPair, PublicKey};
use super::scalar::ModScalar;
use super::CryptoError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBox {
    pub recipient: KeyId,
    pub encapsulated: Vec<u8>,
    pub ciphertext: Vec<u8>,
    pub tag: [u8; 32],
}

impl SealedBox {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.recipient.as_bytes());
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&(self.encapsulated.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.encapsulated);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 68 {
            return None;
        }
        let recipient = KeyId::from_slice(&bytes[..32])?;
        let tag: [u8; 32] = bytes[32..64].try_into().ok()?;
        let len = u32::from_be_bytes(bytes[64..68].try_into().ok()?) as usize;
        let rest = &bytes[68..];
        if rest.len() < len {
            return None;
        }
        Some(SealedBox {
            recipient,
            encapsulated: rest[..len].to_vec(),
            ciphertext: rest[len..].to_vec(),
            tag,
        })
    }
}

fn keystream_xor(key: &[u8; 32], data: &[u8]) -> Vec<u8> {
    data.chunks(32)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let block = sha256(&[b"seal-stream:", key, &(i as u64).to_be_bytes()]);
            chunk.iter().zip(block).map(|(a, b)| a ^ b).collect::<Vec<_>>()
        })
        .collect()
}

pub fn seal<N: ModScalar, R: RngCore>(rng: &mut R, recipient: &PublicKey<N>, plaintext: &[u8]) -> SealedBox {
    let secret = N::random_below(rng, &recipient.modulus);
    let secret_bytes = secret.to_be_bytes_padded(recipient.modulus_len());
    let key = sha256(&[b"seal-key:", &secret_bytes]);
    let ciphertext = keystream_xor(&key, plaintext);
    SealedBox {
        recipient: recipient.key_id(),
        encapsulated: secret
            .pow_mod(&recipient.exponent, &recipient.modulus)
            .to_be_bytes_padded(recipient.modulus_len()),
        tag: sha256(&[b"seal-tag:", &key, &ciphertext]),
        ciphertext,
    }
}

pub fn open<N: ModScalar>(key: &KeyPair<N>, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
    if sealed.recipient != key.key_id {
        return Err(CryptoError::KeyMismatch);
    }
    let c = key
        .public
        .parse_residue(&sealed.encapsulated)
        .ok_or(CryptoError::SealBroken)?;
    let secret_bytes = key.private.apply(&c).to_be_bytes_padded(key.public.modulus_len());
    let k = sha256(&[b"seal-key:", &secret_bytes]);
    if sha256(&[b"seal-tag:", &k, &sealed.ciphertext]) != sealed.tag {
        return Err(CryptoError::SealBroken);
    }
    Ok(keystream_xor(&k, &sealed.ciphertext))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{seeded_rng, ParamSet};
    use num_bigint::BigUint;

    #[test]
    fn seal_round_trip_and_tamper() {
        let cp = KeyPair::<BigUint>::generate(b"cp-intake", ParamSet::Compact).unwrap();
        let other = KeyPair::<BigUint>::generate(b"other", ParamSet::Compact).unwrap();
        let mut rng = seeded_rng(b"s");
        let msg = b"name=alice;dob=1990-01-01;document=P1234567 and some more bytes";
        let sealed = seal(&mut rng, &cp.public, msg);
        assert_eq!(open(&cp, &sealed).unwrap(), msg);
        assert!(!sealed.ciphertext.windows(5).any(|w| w == b"alice"));
        assert_eq!(SealedBox::from_bytes(&sealed.to_bytes()).unwrap(), sealed);
        assert!(matches!(open(&other, &sealed), Err(CryptoError::KeyMismatch)));
        let mut bad = sealed.clone();
        bad.ciphertext[0] ^= 1;
        assert!(matches!(open(&cp, &bad), Err(CryptoError::SealBroken)));
    }
}
