//! Per-user key material and the trapdoor pair `f(alpha, beta)` / `f^-1(y)`.
//!
//! The forward direction is `f(a, b) = a * y^(a mod q) * g^b mod p`. Anyone holding the
//! public key can evaluate it; inverting it needs the private exponent `x` with `y = g^x`.
//! Given a nonce `K` and `c = g^K mod p`, the inverse is
//!
//! ```text
//! alpha = y_target * g^(-K c) mod p
//! beta  = K c - x (alpha mod q)  mod q
//! ```
//!
//! which satisfies `f(alpha, beta) = y_target` for every nonzero target in `GF(p)`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::Rng;

use crate::error::AuthError;
use crate::group::{GroupParams, SecurityProfile};

/// The public half of a ring member's key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserPublicKey {
    pub id: String,
    pub group: GroupParams,
    pub y: BigUint,
}

impl UserPublicKey {
    pub fn validate(&self) -> Result<(), AuthError> {
        self.group.validate()?;
        if !self.group.contains(&self.y) {
            return Err(AuthError::NotInSubgroup);
        }
        Ok(())
    }
}

/// A ring member's full key: public parameters plus the long-term secret `x`.
#[derive(Clone)]
pub struct UserKeyMaterial {
    public: UserPublicKey,
    x: BigUint,
}

impl std::fmt::Debug for UserKeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserKeyMaterial")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl UserKeyMaterial {
    /// Builds key material from an explicit secret. `x` is reduced into `[1, q-1]` range
    /// and rejected if it reduces to zero.
    pub fn from_secret(
        id: impl Into<String>,
        group: GroupParams,
        x: BigUint,
    ) -> Result<Self, AuthError> {
        group.validate()?;
        let x = x % &group.q;
        if x.is_zero() {
            return Err(AuthError::TrapdoorRange("private key must be nonzero mod q"));
        }
        let y = group.pow(&x);
        Ok(UserKeyMaterial {
            public: UserPublicKey {
                id: id.into(),
                group,
                y,
            },
            x,
        })
    }

    pub fn public(&self) -> &UserPublicKey {
        &self.public
    }

    pub(crate) fn secret(&self) -> &BigUint {
        &self.x
    }
}

/// Generates a fresh group for the user and a private key in `Z_q*`.
pub fn keygen_user<R: Rng + ?Sized>(
    id: impl Into<String>,
    profile: SecurityProfile,
    rng: &mut R,
) -> Result<UserKeyMaterial, AuthError> {
    let group = GroupParams::generate(profile, rng)?;
    let x = group.random_nonzero_exponent(rng);
    UserKeyMaterial::from_secret(id, group, x)
}

/// `f(alpha, beta) = alpha * y^(alpha mod q) * g^beta mod p`.
///
/// `alpha` must lie in `[1, p-1]`. `beta` is an exponent and only matters modulo `q`,
/// so values at or above `q` are accepted and reduced.
pub fn trapdoor_forward(
    key: &UserPublicKey,
    alpha: &BigUint,
    beta: &BigUint,
) -> Result<BigUint, AuthError> {
    let grp = &key.group;
    if alpha.is_zero() || alpha >= &grp.p {
        return Err(AuthError::TrapdoorRange("alpha must lie in [1, p-1]"));
    }
    let a_star = alpha % &grp.q;
    let b = beta % &grp.q;
    let t1 = key.y.modpow(&a_star, &grp.p);
    let t2 = grp.g.modpow(&b, &grp.p);
    Ok(alpha * t1 % &grp.p * t2 % &grp.p)
}

/// Inverts `f` for a subgroup element `y`, drawing the nonce `K` from `rng`.
pub fn trapdoor_invert<R: Rng + ?Sized>(
    keys: &UserKeyMaterial,
    y: &BigUint,
    rng: &mut R,
) -> Result<(BigUint, BigUint), AuthError> {
    if !keys.public.group.contains(y) {
        return Err(AuthError::NotInSubgroup);
    }
    invert_residue(keys, y, rng)
}

/// Inversion for any nonzero residue modulo `p`; used when closing the ring, where the
/// target is an arbitrary residue rather than a subgroup element.
pub(crate) fn invert_residue<R: Rng + ?Sized>(
    keys: &UserKeyMaterial,
    y: &BigUint,
    rng: &mut R,
) -> Result<(BigUint, BigUint), AuthError> {
    let grp = &keys.public.group;
    if y.is_zero() || y >= &grp.p {
        return Err(AuthError::TrapdoorRange("target must lie in [1, p-1]"));
    }
    loop {
        let k = rng.gen_biguint_below(&grp.q);
        if let Some(pair) = invert_with_nonce(keys, y, &k) {
            return Ok(pair);
        }
    }
}

/// Deterministic inversion with an explicit nonce `K`. Returns `None` when the nonce
/// yields `alpha = 0`, which cannot happen for a nonzero target but is kept as a guard.
pub fn invert_with_nonce(
    keys: &UserKeyMaterial,
    y: &BigUint,
    k: &BigUint,
) -> Option<(BigUint, BigUint)> {
    let grp = &keys.public.group;
    let c = grp.g.modpow(k, &grp.p);
    let kc = (k * &c) % &grp.q;
    let alpha = (y % &grp.p) * grp.pow_neg(&kc) % &grp.p;
    if alpha.is_zero() {
        return None;
    }
    let a_star = &alpha % &grp.q;
    let xa = (keys.secret() * &a_star) % &grp.q;
    let beta = (&kc + &grp.q - xa) % &grp.q;
    Some((alpha, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_key() -> UserKeyMaterial {
        UserKeyMaterial::from_secret("u", GroupParams::test_group(), BigUint::from(3u32)).unwrap()
    }

    #[test]
    fn toy_public_key() {
        // 4^3 = 64 = 2*23 + 18
        assert_eq!(toy_key().public().y, BigUint::from(18u32));
    }

    #[test]
    fn forward_at_alpha_one_beta_zero() {
        let k = toy_key();
        let out = trapdoor_forward(k.public(), &BigUint::from(1u32), &BigUint::zero()).unwrap();
        assert_eq!(out, BigUint::from(18u32));
    }

    #[test]
    fn beta_shift_by_q_is_invisible() {
        let k = toy_key();
        let q = &k.public().group.q;
        for a in 1u32..23 {
            for b in 0u32..11 {
                let a = BigUint::from(a);
                let b = BigUint::from(b);
                let lhs = trapdoor_forward(k.public(), &a, &b).unwrap();
                let rhs = trapdoor_forward(k.public(), &a, &(&b + q)).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn forward_rejects_alpha_out_of_range() {
        let k = toy_key();
        assert!(trapdoor_forward(k.public(), &BigUint::zero(), &BigUint::zero()).is_err());
        assert!(trapdoor_forward(k.public(), &BigUint::from(23u32), &BigUint::zero()).is_err());
    }

    #[test]
    fn invert_rejects_non_subgroup_target() {
        let k = toy_key();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // 5 is a generator of GF(23)*, so it is outside the order-11 subgroup.
        let err = trapdoor_invert(&k, &BigUint::from(5u32), &mut rng).unwrap_err();
        assert_eq!(err, AuthError::NotInSubgroup);
    }

    #[test]
    fn different_nonces_give_different_preimages() {
        let k = toy_key();
        let y = BigUint::from(18u32);
        let a = invert_with_nonce(&k, &y, &BigUint::from(2u32)).unwrap();
        let b = invert_with_nonce(&k, &y, &BigUint::from(5u32)).unwrap();
        assert_ne!(a, b);
        assert_eq!(trapdoor_forward(k.public(), &a.0, &a.1).unwrap(), y);
        assert_eq!(trapdoor_forward(k.public(), &b.0, &b.1).unwrap(), y);
    }

    #[test]
    fn residues_outside_the_subgroup_also_invert() {
        let k = toy_key();
        for y in 1u32..23 {
            for kk in 0u32..11 {
                let y = BigUint::from(y);
                let (a, b) = invert_with_nonce(&k, &y, &BigUint::from(kk)).unwrap();
                assert_eq!(trapdoor_forward(k.public(), &a, &b).unwrap(), y);
            }
        }
    }

    #[test]
    fn zero_private_key_rejected() {
        let err = UserKeyMaterial::from_secret("u", GroupParams::test_group(), BigUint::from(11u32));
        assert!(err.is_err());
    }
}
