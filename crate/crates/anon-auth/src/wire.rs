//! Byte encoding of ring signatures.
//!
//! Layout: `u32 n`, then per member `bytes(id) int(p) int(q) int(g) int(y)`, then
//! `int(nu) int(V) int(R)`, then per member `int(alpha) int(beta)`, then `bytes(I)`.
//! `bytes` is a 4-byte big-endian length followed by the data; `int` is `bytes` of the
//! minimal big-endian magnitude (zero is empty). Decoding is strict: non-minimal
//! integers and trailing bytes are rejected.

use num_bigint::BigUint;

use crate::error::AuthError;
use crate::group::GroupParams;
use crate::protocol::RingSignature;
use crate::trapdoor::UserPublicKey;

/// Upper bound on ring size accepted by the decoder.
pub const MAX_RING_SIZE: usize = 4096;

fn put_bytes(out: &mut Vec<u8>, data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(data);
}

fn put_int(out: &mut Vec<u8>, v: &BigUint) {
    if v.bits() == 0 {
        put_bytes(out, &[]);
    } else {
        put_bytes(out, &v.to_bytes_be());
    }
}

pub fn encode_signature(sigma: &RingSignature) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(sigma.ring.len() as u32).to_be_bytes());
    for m in &sigma.ring {
        put_bytes(&mut out, m.id.as_bytes());
        put_int(&mut out, &m.group.p);
        put_int(&mut out, &m.group.q);
        put_int(&mut out, &m.group.g);
        put_int(&mut out, &m.y);
    }
    put_int(&mut out, &sigma.nu);
    put_int(&mut out, &sigma.v);
    put_int(&mut out, &sigma.r);
    for (a, b) in &sigma.pairs {
        put_int(&mut out, a);
        put_int(&mut out, b);
    }
    put_bytes(&mut out, &sigma.identity_tag);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32, AuthError> {
        if self.buf.len() < 4 {
            return Err(AuthError::Malformed("truncated length"));
        }
        let (head, rest) = self.buf.split_at(4);
        self.buf = rest;
        Ok(u32::from_be_bytes([head[0], head[1], head[2], head[3]]))
    }

    fn bytes(&mut self) -> Result<&'a [u8], AuthError> {
        let len = self.u32()? as usize;
        if self.buf.len() < len {
            return Err(AuthError::Malformed("truncated field"));
        }
        let (head, rest) = self.buf.split_at(len);
        self.buf = rest;
        Ok(head)
    }

    fn int(&mut self) -> Result<BigUint, AuthError> {
        let raw = self.bytes()?;
        if raw.first() == Some(&0) {
            return Err(AuthError::Malformed("non-minimal integer encoding"));
        }
        Ok(BigUint::from_bytes_be(raw))
    }
}

pub fn decode_signature(buf: &[u8]) -> Result<RingSignature, AuthError> {
    let mut r = Reader { buf };
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(AuthError::EmptyRing);
    }
    if n > MAX_RING_SIZE {
        return Err(AuthError::Malformed("ring too large"));
    }
    let mut ring = Vec::with_capacity(n);
    for _ in 0..n {
        let id = std::str::from_utf8(r.bytes()?)
            .map_err(|_| AuthError::Malformed("member id is not UTF-8"))?
            .to_owned();
        let p = r.int()?;
        let q = r.int()?;
        let g = r.int()?;
        let y = r.int()?;
        ring.push(UserPublicKey {
            id,
            group: GroupParams { p, q, g },
            y,
        });
    }
    let nu = r.int()?;
    let v = r.int()?;
    let rr = r.int()?;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = r.int()?;
        let b = r.int()?;
        pairs.push((a, b));
    }
    let identity_tag = r.bytes()?.to_vec();
    if !r.buf.is_empty() {
        return Err(AuthError::Malformed("trailing bytes"));
    }
    Ok(RingSignature {
        ring,
        nu,
        v,
        r: rr,
        pairs,
        identity_tag,
    })
}
