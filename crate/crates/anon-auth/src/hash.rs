use num_bigint::BigUint;
use sha2::{Digest, Sha256};

pub const DIGEST_LEN: usize = 32;

pub type Digest32 = [u8; DIGEST_LEN];

/// Fixed-output hash over a sequence of fields. Each field is framed with a 4-byte
/// big-endian length so that distinct field lists never collide by concatenation.
#[derive(Default, Clone)]
pub struct TranscriptHash {
    inner: Sha256,
}

impl TranscriptHash {
    pub fn new(domain: &[u8]) -> Self {
        let mut h = TranscriptHash {
            inner: Sha256::new(),
        };
        h.bytes(domain);
        h
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.inner.update((data.len() as u32).to_be_bytes());
        self.inner.update(data);
        self
    }

    pub fn int(&mut self, value: &BigUint) -> &mut Self {
        if value == &BigUint::default() {
            self.bytes(&[])
        } else {
            self.bytes(&value.to_bytes_be())
        }
    }

    pub fn finish(self) -> Digest32 {
        let out = self.inner.finalize();
        let mut d = [0u8; DIGEST_LEN];
        d.copy_from_slice(&out);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_separates_fields() {
        let mut a = TranscriptHash::new(b"t");
        a.bytes(b"ab").bytes(b"c");
        let mut b = TranscriptHash::new(b"t");
        b.bytes(b"a").bytes(b"bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn zero_and_empty_agree() {
        let mut a = TranscriptHash::new(b"t");
        a.int(&BigUint::from(0u32));
        let mut b = TranscriptHash::new(b"t");
        b.bytes(&[]);
        assert_eq!(a.finish(), b.finish());
    }
}
