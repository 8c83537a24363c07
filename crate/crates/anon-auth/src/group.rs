//! Prime-order subgroups of `GF(p)*` and their generation.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::AuthError;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

const MILLER_RABIN_ROUNDS: usize = 32;
const MAX_ATTEMPTS: usize = 100_000;

/// Bit lengths for a generated group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecurityProfile {
    /// The fixed toy group p = 23, q = 11, g = 4. Only for tests and demos.
    Test,
    /// Randomly generated group with a 512-bit modulus and a 160-bit subgroup order.
    Desk,
    /// Custom bit lengths `(p_bits, q_bits)`.
    Custom { p_bits: u64, q_bits: u64 },
}

impl SecurityProfile {
    pub fn bit_lengths(&self) -> Option<(u64, u64)> {
        match *self {
            SecurityProfile::Test => None,
            SecurityProfile::Desk => Some((512, 160)),
            SecurityProfile::Custom { p_bits, q_bits } => Some((p_bits, q_bits)),
        }
    }
}

/// `(p, q, g)` with `q | p - 1` and `g` of order `q` modulo `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupParams {
    pub p: BigUint,
    pub q: BigUint,
    pub g: BigUint,
}

impl GroupParams {
    /// The p = 23, q = 11, g = 4 toy group.
    pub fn test_group() -> Self {
        GroupParams {
            p: BigUint::from(23u32),
            q: BigUint::from(11u32),
            g: BigUint::from(4u32),
        }
    }

    pub fn generate<R: Rng + ?Sized>(
        profile: SecurityProfile,
        rng: &mut R,
    ) -> Result<Self, AuthError> {
        match profile.bit_lengths() {
            None => Ok(Self::test_group()),
            Some((p_bits, q_bits)) => generate_group(p_bits, q_bits, rng),
        }
    }

    /// Cheap structural checks. Primality is not re-established here.
    pub fn validate(&self) -> Result<(), AuthError> {
        let one = BigUint::one();
        if self.p <= BigUint::from(3u32) {
            return Err(AuthError::InvalidGroup("modulus too small"));
        }
        if self.q <= one {
            return Err(AuthError::InvalidGroup("subgroup order too small"));
        }
        if self.g <= one || self.g >= self.p {
            return Err(AuthError::InvalidGroup("generator out of range"));
        }
        if !(&self.p - &one).is_multiple_of(&self.q) {
            return Err(AuthError::InvalidGroup("q does not divide p - 1"));
        }
        if self.g.modpow(&self.q, &self.p) != one {
            return Err(AuthError::InvalidGroup("generator order is not q"));
        }
        Ok(())
    }

    pub fn pow(&self, exp: &BigUint) -> BigUint {
        self.g.modpow(exp, &self.p)
    }

    /// `g^(-e) mod p`, using that `g` has order `q`.
    pub fn pow_neg(&self, exp: &BigUint) -> BigUint {
        let e = exp % &self.q;
        let inv = (&self.q - e) % &self.q;
        self.g.modpow(&inv, &self.p)
    }

    pub fn contains(&self, y: &BigUint) -> bool {
        !y.is_zero() && y < &self.p && y.modpow(&self.q, &self.p).is_one()
    }

    /// Uniform draw from `[1, q - 1]`.
    pub fn random_nonzero_exponent<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.q)
    }

    /// Every element of the subgroup, in `g^0, g^1, ...` order. Only sensible for toy groups.
    pub fn subgroup_elements(&self) -> Vec<BigUint> {
        let mut out = Vec::new();
        let mut acc = BigUint::one();
        loop {
            out.push(acc.clone());
            acc = (&acc * &self.g) % &self.p;
            if acc.is_one() {
                break;
            }
        }
        out
    }
}

fn generate_group<R: Rng + ?Sized>(
    p_bits: u64,
    q_bits: u64,
    rng: &mut R,
) -> Result<GroupParams, AuthError> {
    if q_bits < 2 || p_bits <= q_bits + 1 {
        return Err(AuthError::InvalidGroup("p must be longer than q"));
    }
    let one = BigUint::one();
    let q = random_prime(q_bits, rng)?;
    let p_min = BigUint::one() << (p_bits - 1);
    let p_max = (BigUint::one() << p_bits) - 1u32;
    // p = k q + 1 with p in [2^(p_bits-1), 2^p_bits)
    let k_min = (&p_min - &one).div_ceil(&q);
    let k_max = (&p_max - &one) / &q;
    for _ in 0..MAX_ATTEMPTS {
        let mut k = rng.gen_biguint_range(&k_min, &(&k_max + &one));
        if k.is_odd() {
            k += 1u32;
            if k > k_max {
                continue;
            }
        }
        let p = &k * &q + &one;
        if !is_probable_prime(&p, rng) {
            continue;
        }
        let exp = (&p - &one) / &q;
        for _ in 0..64 {
            let h = rng.gen_biguint_range(&BigUint::from(2u32), &(&p - &one));
            let g = h.modpow(&exp, &p);
            if !g.is_one() {
                return Ok(GroupParams { p, q, g });
            }
        }
    }
    Err(AuthError::ParameterGeneration {
        attempts: MAX_ATTEMPTS,
    })
}

fn random_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, AuthError> {
    for _ in 0..MAX_ATTEMPTS {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
    Err(AuthError::ParameterGeneration {
        attempts: MAX_ATTEMPTS,
    })
}

/// Trial division followed by Miller-Rabin with random bases.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn test_group_is_valid() {
        let g = GroupParams::test_group();
        g.validate().unwrap();
        assert_eq!(g.subgroup_elements().len(), 11);
    }

    #[test]
    fn miller_rabin_agrees_with_sieve_below_2000() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let limit = 2000usize;
        let mut sieve = vec![true; limit];
        sieve[0] = false;
        sieve[1] = false;
        for i in 2..limit {
            if sieve[i] {
                let mut j = i * i;
                while j < limit {
                    sieve[j] = false;
                    j += i;
                }
            }
        }
        for (n, &expected) in sieve.iter().enumerate() {
            assert_eq!(
                is_probable_prime(&BigUint::from(n), &mut rng),
                expected,
                "n = {n}"
            );
        }
    }

    #[test]
    fn carmichael_numbers_are_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [561u32, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265] {
            assert!(!is_probable_prime(&BigUint::from(n), &mut rng));
        }
    }

    #[test]
    fn desk_group_satisfies_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GroupParams::generate(SecurityProfile::Desk, &mut rng).unwrap();
        assert_eq!(g.p.bits(), 512);
        assert_eq!(g.q.bits(), 160);
        g.validate().unwrap();
        assert!(is_probable_prime(&g.p, &mut rng));
        assert!(is_probable_prime(&g.q, &mut rng));
    }

    #[test]
    fn rejects_generator_of_wrong_order() {
        let mut g = GroupParams::test_group();
        g.g = BigUint::from(5u32); // 5 generates all of GF(23)*
        assert!(g.validate().is_err());
    }

    #[test]
    fn negative_power_inverts() {
        let g = GroupParams::test_group();
        for e in 0u32..30 {
            let e = BigUint::from(e);
            assert_eq!((g.pow(&e) * g.pow_neg(&e)) % &g.p, BigUint::one());
        }
    }
}
