//! Canonical length-prefixed encoding shared by ledger entries and protocol
//! frames. Every field is a `u32` big-endian length followed by that many
//! bytes; integers are fixed-width big-endian inside a field. Decoding is
//! strict: a trailing or missing field is an error, never ignored.

use crate::crypto::{KeyId, Signature};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("trailing bytes after the last field")]
    Trailing,
    #[error("expected tag {expected:?}")]
    BadTag { expected: String },
    #[error("field has the wrong width")]
    BadWidth,
    #[error("unknown variant {0}")]
    UnknownVariant(String),
    #[error("invalid utf-8 in text field")]
    BadText,
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tagged(tag: &str) -> Self {
        let mut e = Self::new();
        e.buf.extend_from_slice(tag.as_bytes());
        e
    }

    pub fn bytes(&mut self, field: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(field.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn flag(&mut self, v: bool) -> &mut Self {
        self.bytes(&[v as u8])
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn key_id(&mut self, id: &KeyId) -> &mut Self {
        self.bytes(id.as_bytes())
    }

    /// Signer id and value packed into one field.
    pub fn signature(&mut self, sig: &Signature) -> &mut Self {
        self.bytes(&signature_bytes(sig))
    }

    pub fn opt_u64(&mut self, v: Option<u64>) -> &mut Self {
        match v {
            Some(v) => self.bytes(&v.to_be_bytes()),
            None => self.bytes(&[]),
        }
    }

    /// A nested list: count field, then each element as its own field.
    pub fn list<T>(&mut self, items: &[T], mut each: impl FnMut(&mut Self, &T)) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            each(self, item);
        }
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

pub fn signature_bytes(sig: &Signature) -> Vec<u8> {
    let mut out = sig.signer.as_bytes().to_vec();
    out.extend_from_slice(&sig.value);
    out
}

pub fn signature_from_bytes(bytes: &[u8]) -> Result<Signature, WireError> {
    if bytes.len() <= 32 {
        return Err(WireError::BadWidth);
    }
    Ok(Signature {
        signer: KeyId::from_slice(&bytes[..32]).ok_or(WireError::BadWidth)?,
        value: bytes[32..].to_vec(),
    })
}

pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Decoder { rest: bytes }
    }

    pub fn tagged(bytes: &'a [u8], tag: &str) -> Result<Self, WireError> {
        bytes
            .strip_prefix(tag.as_bytes())
            .map(Decoder::new)
            .ok_or_else(|| WireError::BadTag { expected: tag.to_string() })
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        if self.rest.len() < 4 {
            return Err(WireError::Truncated);
        }
        let len = u32::from_be_bytes(self.rest[..4].try_into().unwrap()) as usize;
        let body = &self.rest[4..];
        if body.len() < len {
            return Err(WireError::Truncated);
        }
        self.rest = &body[len..];
        Ok(&body[..len])
    }

    pub fn vec(&mut self) -> Result<Vec<u8>, WireError> {
        self.bytes().map(<[u8]>::to_vec)
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.bytes()?;
        Ok(u64::from_be_bytes(b.try_into().map_err(|_| WireError::BadWidth)?))
    }

    pub fn flag(&mut self) -> Result<bool, WireError> {
        match self.bytes()? {
            [0] => Ok(false),
            [1] => Ok(true),
            _ => Err(WireError::BadWidth),
        }
    }

    pub fn text(&mut self) -> Result<String, WireError> {
        String::from_utf8(self.vec()?).map_err(|_| WireError::BadText)
    }

    pub fn key_id(&mut self) -> Result<KeyId, WireError> {
        KeyId::from_slice(self.bytes()?).ok_or(WireError::BadWidth)
    }

    pub fn array32(&mut self) -> Result<[u8; 32], WireError> {
        self.bytes()?.try_into().map_err(|_| WireError::BadWidth)
    }

    pub fn signature(&mut self) -> Result<Signature, WireError> {
        signature_from_bytes(self.bytes()?)
    }

    pub fn opt_u64(&mut self) -> Result<Option<u64>, WireError> {
        let b = self.bytes()?;
        if b.is_empty() {
            return Ok(None);
        }
        Ok(Some(u64::from_be_bytes(b.try_into().map_err(|_| WireError::BadWidth)?)))
    }

    pub fn list<T>(
        &mut self,
        mut each: impl FnMut(&mut Self) -> Result<T, WireError>,
    ) -> Result<Vec<T>, WireError> {
        let n = self.u64()?;
        if n > self.rest.len() as u64 {
            return Err(WireError::Truncated);
        }
        (0..n).map(|_| each(self)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(WireError::Trailing)
        }
    }

    /// Remaining top-level field count without consuming anything; used by
    /// structural scans.
    pub fn count_fields(mut self) -> Result<usize, WireError> {
        let mut n = 0;
        while !self.rest.is_empty() {
            self.bytes()?;
            n += 1;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strict_decoding() {
        let bytes = Encoder::tagged("t:").u64(5).text("hi").finish();
        let mut d = Decoder::tagged(&bytes, "t:").unwrap();
        assert_eq!(d.u64().unwrap(), 5);
        assert_eq!(d.text().unwrap(), "hi");
        d.finish().unwrap();

        let mut d = Decoder::tagged(&bytes, "t:").unwrap();
        d.u64().unwrap();
        assert_eq!(d.finish(), Err(WireError::Trailing));
        assert!(Decoder::tagged(&bytes, "x:").is_err());
        assert_eq!(Decoder::new(&bytes[2..5]).bytes(), Err(WireError::Truncated));
    }

    #[test]
    fn signature_packing() {
        let sig = Signature { signer: KeyId([7; 32]), value: vec![1, 2, 3] };
        assert_eq!(signature_from_bytes(&signature_bytes(&sig)).unwrap(), sig);
        assert!(signature_from_bytes(&[0; 32]).is_err());
    }

    proptest! {
        #[test]
        fn fields_round_trip(fields in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..40), 0..8)) {
            let mut e = Encoder::new();
            e.list(&fields, |e, f| { e.bytes(f); });
            let bytes = e.finish();
            let mut d = Decoder::new(&bytes);
            let back = d.list(|d| d.vec()).unwrap();
            d.finish().unwrap();
            prop_assert_eq!(back, fields);
        }
    }
}
