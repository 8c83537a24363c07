//! Keyed combining function over `b`-bit blocks.
//!
//! `C_{k,v}(y_1..y_n) = E_k(y_n ^ E_k(y_{n-1} ^ ... E_k(y_1 ^ v)...))`, where `E_k` is a
//! keyed permutation of `b`-bit strings. Because `E_k` is invertible, the chain can be
//! solved for any single `y_i` once the others are fixed, which is what lets one ring
//! member close the equation `C = v`.

use num_bigint::BigUint;
use num_traits::One;
use sha2::{Digest, Sha256};

use crate::error::AuthError;

const FEISTEL_ROUNDS: u8 = 4;

/// A 4-round balanced Feistel network over `b`-bit blocks, with SHA-256 in counter
/// mode as the round function.
#[derive(Clone)]
pub struct FeistelPermutation {
    key: Vec<u8>,
    block_bits: usize,
    half_bits: usize,
    half_mask: BigUint,
}

impl FeistelPermutation {
    pub fn new(key: &[u8], block_bits: usize) -> Result<Self, AuthError> {
        if block_bits == 0 || block_bits % 2 != 0 {
            return Err(AuthError::BlockWidth(block_bits));
        }
        let half_bits = block_bits / 2;
        let half_mask = (BigUint::one() << half_bits) - 1u32;
        Ok(FeistelPermutation {
            key: key.to_vec(),
            block_bits,
            half_bits,
            half_mask,
        })
    }

    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    fn check(&self, x: &BigUint) -> Result<(), AuthError> {
        if x.bits() as usize > self.block_bits {
            return Err(AuthError::DomainOverflow(self.block_bits));
        }
        Ok(())
    }

    fn round_fn(&self, round: u8, half: &BigUint) -> BigUint {
        let half_bytes = self.half_bits.div_ceil(8);
        let input = half.to_bytes_be();
        let mut stream = Vec::with_capacity(half_bytes + 32);
        let mut counter: u32 = 0;
        while stream.len() < half_bytes {
            let mut h = Sha256::new();
            h.update((self.key.len() as u32).to_be_bytes());
            h.update(&self.key);
            h.update([round]);
            h.update(counter.to_be_bytes());
            h.update((input.len() as u32).to_be_bytes());
            h.update(&input);
            stream.extend_from_slice(&h.finalize());
            counter += 1;
        }
        stream.truncate(half_bytes);
        BigUint::from_bytes_be(&stream) & &self.half_mask
    }

    fn split(&self, x: &BigUint) -> (BigUint, BigUint) {
        (x >> self.half_bits, x & &self.half_mask)
    }

    fn join(&self, left: BigUint, right: BigUint) -> BigUint {
        (left << self.half_bits) | right
    }

    pub fn encrypt(&self, x: &BigUint) -> Result<BigUint, AuthError> {
        self.check(x)?;
        let (mut l, mut r) = self.split(x);
        for round in 0..FEISTEL_ROUNDS {
            let f = self.round_fn(round, &r);
            let next_r = l ^ f;
            l = r;
            r = next_r;
        }
        Ok(self.join(l, r))
    }

    pub fn decrypt(&self, x: &BigUint) -> Result<BigUint, AuthError> {
        self.check(x)?;
        let (mut l, mut r) = self.split(x);
        for round in (0..FEISTEL_ROUNDS).rev() {
            let f = self.round_fn(round, &l);
            let prev_l = r ^ f;
            r = l;
            l = prev_l;
        }
        Ok(self.join(l, r))
    }
}

/// Evaluates `C_{k,v}(ys)`.
pub fn combine(e: &FeistelPermutation, nu: &BigUint, ys: &[BigUint]) -> Result<BigUint, AuthError> {
    let mut z = nu.clone();
    e.check(&z)?;
    for y in ys {
        e.check(y)?;
        z = e.encrypt(&(y ^ &z))?;
    }
    Ok(z)
}

/// Finds `y_gap` such that `C_{k,v}(y_1..y_n) = v` when `ys[gap]` is replaced by it.
/// The value at `ys[gap]` is ignored.
pub fn solve_gap(
    e: &FeistelPermutation,
    nu: &BigUint,
    ys: &[BigUint],
    gap: usize,
) -> Result<BigUint, AuthError> {
    if gap >= ys.len() {
        return Err(AuthError::LengthMismatch {
            expected: gap + 1,
            actual: ys.len(),
        });
    }
    e.check(nu)?;
    // Forward from the start up to the value entering position `gap`.
    let mut z_before = nu.clone();
    for y in &ys[..gap] {
        e.check(y)?;
        z_before = e.encrypt(&(y ^ &z_before))?;
    }
    // Backward from the closing value `v` down to the output of position `gap`.
    let mut z_after = nu.clone();
    for y in ys[gap + 1..].iter().rev() {
        e.check(y)?;
        z_after = e.decrypt(&z_after)? ^ y;
    }
    Ok(e.decrypt(&z_after)? ^ z_before)
}
