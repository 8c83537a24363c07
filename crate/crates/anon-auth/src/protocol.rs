//! The three-round anonymous authenticated key exchange between a ring member and the
//! authentication server.
//!
//! Round 1 (client): pick ephemerals `x1, xa`, compute `R = g^x1`, `Q = (yB^x1 mod p) mod q`,
//! `X = g^xa`, `V = X g^-Q`, derive the combining key `l = H(X, Q, V, yB, I)` and produce a
//! ring signature over the ring members' trapdoor functions.
//!
//! Round 2 (server): recover `Q = (R^xB mod p) mod q` and `X = V g^Q`, recompute `l`, check
//! that the ring equation closes, then answer with `Y = g^xb` and `h = H(Ks, X, Y, I)` where
//! `Ks = X^xb`.
//!
//! Round 3 (client): `Ks' = Y^xa`, accept iff `H(Ks', X, Y, I) = h`.
//!
//! Each member's trapdoor output lives in its own `GF(p_t)`. To put all of them in the
//! common `b`-bit combining domain, the signature's `beta_t` carries a lift: writing
//! `beta_t = lift_t * q_t + (beta_t mod q_t)`, the member's `b`-bit value is
//! `lift_t * p_t + f_t(alpha_t, beta_t)`. Since `g_t` has order `q_t`, the lift does not
//! change `f_t` itself.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;

use crate::combine::{combine, solve_gap, FeistelPermutation};
use crate::error::AuthError;
use crate::group::{GroupParams, SecurityProfile};
use crate::hash::{Digest32, TranscriptHash};
use crate::trapdoor::{invert_residue, trapdoor_forward, UserKeyMaterial, UserPublicKey};

/// Default width of the combining domain.
pub const DEFAULT_BLOCK_BITS: usize = 1024;

/// Minimum headroom between the widest ring modulus and the combining domain.
pub const BLOCK_HEADROOM_BITS: usize = 160;

const MAX_CLOSING_ATTEMPTS: usize = 64;

/// What the authentication server publishes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerPublic {
    pub group: GroupParams,
    pub y_b: BigUint,
    pub block_bits: usize,
}

/// Server key pair.
#[derive(Clone)]
pub struct ServerKeyMaterial {
    public: ServerPublic,
    x_b: BigUint,
}

impl std::fmt::Debug for ServerKeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerKeyMaterial")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl ServerKeyMaterial {
    pub fn generate<R: Rng + ?Sized>(
        profile: SecurityProfile,
        block_bits: usize,
        rng: &mut R,
    ) -> Result<Self, AuthError> {
        let group = GroupParams::generate(profile, rng)?;
        let x_b = group.random_nonzero_exponent(rng);
        Self::from_secret(group, x_b, block_bits)
    }

    pub fn from_secret(group: GroupParams, x_b: BigUint, block_bits: usize) -> Result<Self, AuthError> {
        group.validate()?;
        if block_bits == 0 || block_bits % 2 != 0 {
            return Err(AuthError::BlockWidth(block_bits));
        }
        let x_b = x_b % &group.q;
        if x_b.is_zero() {
            return Err(AuthError::TrapdoorRange("server key must be nonzero mod q"));
        }
        let y_b = group.pow(&x_b);
        Ok(ServerKeyMaterial {
            public: ServerPublic {
                group,
                y_b,
                block_bits,
            },
            x_b,
        })
    }

    pub fn public(&self) -> &ServerPublic {
        &self.public
    }
}

/// `(U_1..U_n, nu, V, R, (alpha_t, beta_t)_t, I)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingSignature {
    pub ring: Vec<UserPublicKey>,
    pub nu: BigUint,
    pub v: BigUint,
    pub r: BigUint,
    pub pairs: Vec<(BigUint, BigUint)>,
    pub identity_tag: Vec<u8>,
}

/// Client state carried from round 1 into round 3. Consumed by [`client_confirm_round3`].
pub struct ClientSession {
    server: ServerPublic,
    x_a: BigUint,
    x_pub: BigUint,
    identity_tag: Vec<u8>,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("x_pub", &self.x_pub)
            .finish_non_exhaustive()
    }
}

impl ClientSession {
    /// The ephemeral public value `X = g^xa`.
    pub fn x_pub(&self) -> &BigUint {
        &self.x_pub
    }
}

/// Round-2 message from server to client: `{h, Y, I'}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerResponse {
    pub h: Digest32,
    pub y_pub: BigUint,
    pub server_tag: Vec<u8>,
}

/// What the server keeps after accepting a signature. The ephemeral `xb` is not retained.
#[derive(Debug, Clone)]
pub struct ServerSession {
    pub session_key: SessionKey,
    pub x_pub: BigUint,
    pub y_pub: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKey(pub BigUint);

/// `l = H(X, Q, V, yB, I)`, with the ring's identities and public parameters appended so
/// that the signature is bound to the exact member list it was made for.
fn combining_key(
    x_pub: &BigUint,
    q_val: &BigUint,
    v: &BigUint,
    y_b: &BigUint,
    identity_tag: &[u8],
    ring: &[UserPublicKey],
) -> Digest32 {
    let mut h = TranscriptHash::new(b"ring-combining-key");
    h.int(x_pub).int(q_val).int(v).int(y_b).bytes(identity_tag);
    h.bytes(&(ring.len() as u32).to_be_bytes());
    for m in ring {
        h.bytes(m.id.as_bytes())
            .int(&m.group.p)
            .int(&m.group.q)
            .int(&m.group.g)
            .int(&m.y);
    }
    h.finish()
}

fn confirmation_hash(k_s: &BigUint, x_pub: &BigUint, y_pub: &BigUint, identity_tag: &[u8]) -> Digest32 {
    let mut h = TranscriptHash::new(b"server-confirmation");
    h.int(k_s).int(x_pub).int(y_pub).bytes(identity_tag);
    h.finish()
}

fn check_block_width(ring: &[UserPublicKey], block_bits: usize) -> Result<(), AuthError> {
    let widest = ring.iter().map(|m| m.group.p.bits() as usize).max().unwrap_or(0);
    if block_bits < widest + BLOCK_HEADROOM_BITS || block_bits % 2 != 0 {
        return Err(AuthError::BlockWidth(block_bits));
    }
    Ok(())
}

/// Number of whole copies of `p` that fit in the `b`-bit domain.
fn lift_bound(p: &BigUint, block_bits: usize) -> BigUint {
    (BigUint::one() << block_bits) / p
}

/// Maps a member's `(alpha, beta)` to its `b`-bit ring value.
fn member_value(
    member: &UserPublicKey,
    alpha: &BigUint,
    beta: &BigUint,
    block_bits: usize,
) -> Result<BigUint, AuthError> {
    let lift = beta / &member.group.q;
    if lift >= lift_bound(&member.group.p, block_bits) {
        return Err(AuthError::Malformed("beta lift outside the combining domain"));
    }
    let f = trapdoor_forward(member, alpha, beta)?;
    Ok(lift * &member.group.p + f)
}

/// Round 1. `signer` indexes into `ring`; `keys` must be that member's key material.
pub fn sign_round1<R: Rng + ?Sized>(
    signer: usize,
    keys: &UserKeyMaterial,
    ring: &[UserPublicKey],
    server: &ServerPublic,
    identity_tag: &[u8],
    rng: &mut R,
) -> Result<(RingSignature, ClientSession), AuthError> {
    if ring.is_empty() {
        return Err(AuthError::EmptyRing);
    }
    if signer >= ring.len() || &ring[signer] != keys.public() {
        return Err(AuthError::SignerNotInRing {
            index: signer,
            ring_size: ring.len(),
        });
    }
    let b = server.block_bits;
    check_block_width(ring, b)?;
    let grp = &server.group;

    let x1 = grp.random_nonzero_exponent(rng);
    let x_a = grp.random_nonzero_exponent(rng);
    let r_pub = grp.pow(&x1);
    let q_val = server.y_b.modpow(&x1, &grp.p) % &grp.q;
    let x_pub = grp.pow(&x_a);
    let v = &x_pub * grp.pow_neg(&q_val) % &grp.p;
    let l = combining_key(&x_pub, &q_val, &v, &server.y_b, identity_tag, ring);
    let e = FeistelPermutation::new(&l, b)?;

    // Everyone but the signer gets a random preimage.
    let mut pairs = vec![(BigUint::zero(), BigUint::zero()); ring.len()];
    let mut ys = vec![BigUint::zero(); ring.len()];
    for (t, member) in ring.iter().enumerate() {
        if t == signer {
            continue;
        }
        let grp_t = &member.group;
        let alpha = rng.gen_biguint_range(&BigUint::one(), &grp_t.p);
        let lift = rng.gen_biguint_below(&lift_bound(&grp_t.p, b));
        let beta = lift * &grp_t.q + rng.gen_biguint_below(&grp_t.q);
        ys[t] = member_value(member, &alpha, &beta, b)?;
        pairs[t] = (alpha, beta);
    }

    let own = &ring[signer].group;
    let bound = lift_bound(&own.p, b);
    for _ in 0..MAX_CLOSING_ATTEMPTS {
        let nu = rng.gen_biguint(b as u64);
        let y_i = solve_gap(&e, &nu, &ys, signer)?;
        let lift = &y_i / &own.p;
        let residue = &y_i % &own.p;
        if lift >= bound || residue.is_zero() {
            continue;
        }
        let (alpha, beta) = invert_residue(keys, &residue, rng)?;
        pairs[signer] = (alpha, lift * &own.q + beta);
        let sigma = RingSignature {
            ring: ring.to_vec(),
            nu,
            v,
            r: r_pub,
            pairs,
            identity_tag: identity_tag.to_vec(),
        };
        let session = ClientSession {
            server: server.clone(),
            x_a,
            x_pub,
            identity_tag: identity_tag.to_vec(),
        };
        return Ok((sigma, session));
    }
    Err(AuthError::ParameterGeneration {
        attempts: MAX_CLOSING_ATTEMPTS,
    })
}

/// Recomputes every member's ring value and checks the ring equation. Does not touch
/// the server's private key beyond recovering `X`.
fn check_signature(
    server: &ServerKeyMaterial,
    sigma: &RingSignature,
    identity_tag: &[u8],
) -> Result<BigUint, AuthError> {
    let pubk = &server.public;
    let grp = &pubk.group;
    if sigma.ring.is_empty() {
        return Err(AuthError::EmptyRing);
    }
    if sigma.pairs.len() != sigma.ring.len() {
        return Err(AuthError::LengthMismatch {
            expected: sigma.ring.len(),
            actual: sigma.pairs.len(),
        });
    }
    if sigma.identity_tag != identity_tag {
        return Err(AuthError::Malformed("identity tag does not match the session"));
    }
    check_block_width(&sigma.ring, pubk.block_bits)?;
    for v in [&sigma.v, &sigma.r] {
        if v.is_zero() || v >= &grp.p {
            return Err(AuthError::Malformed("group element out of range"));
        }
    }
    if sigma.nu.bits() as usize > pubk.block_bits {
        return Err(AuthError::DomainOverflow(pubk.block_bits));
    }
    for member in &sigma.ring {
        member.validate()?;
    }

    let q_val = sigma.r.modpow(&server.x_b, &grp.p) % &grp.q;
    let x_pub = &sigma.v * grp.pow(&q_val) % &grp.p;
    let l = combining_key(&x_pub, &q_val, &sigma.v, &pubk.y_b, identity_tag, &sigma.ring);
    let e = FeistelPermutation::new(&l, pubk.block_bits)?;
    let ys = sigma
        .ring
        .iter()
        .zip(&sigma.pairs)
        .map(|(m, (a, b))| member_value(m, a, b, pubk.block_bits))
        .collect::<Result<Vec<_>, _>>()?;
    if combine(&e, &sigma.nu, &ys)? != sigma.nu {
        return Err(AuthError::RingEquationMismatch);
    }
    Ok(x_pub)
}

/// Round 2. On acceptance returns the message for the client and the server's session.
pub fn server_verify_round2<R: Rng + ?Sized>(
    server: &ServerKeyMaterial,
    sigma: &RingSignature,
    identity_tag: &[u8],
    server_tag: &[u8],
    rng: &mut R,
) -> Result<(ServerResponse, ServerSession), AuthError> {
    let x_pub = check_signature(server, sigma, identity_tag)?;
    let grp = &server.public.group;
    let x_b = grp.random_nonzero_exponent(rng);
    let y_pub = grp.pow(&x_b);
    let k_s = x_pub.modpow(&x_b, &grp.p);
    let h = confirmation_hash(&k_s, &x_pub, &y_pub, identity_tag);
    Ok((
        ServerResponse {
            h,
            y_pub: y_pub.clone(),
            server_tag: server_tag.to_vec(),
        },
        ServerSession {
            session_key: SessionKey(k_s),
            x_pub,
            y_pub,
        },
    ))
}

/// Round 3. Consumes the client session; the ephemeral `xa` does not outlive this call.
pub fn client_confirm_round3(
    session: ClientSession,
    response: &ServerResponse,
) -> Result<SessionKey, AuthError> {
    let grp = &session.server.group;
    if response.y_pub.is_zero() || response.y_pub >= grp.p {
        return Err(AuthError::ConfirmationMismatch);
    }
    let k_s = response.y_pub.modpow(&session.x_a, &grp.p);
    let h = confirmation_hash(&k_s, &session.x_pub, &response.y_pub, &session.identity_tag);
    if h != response.h {
        return Err(AuthError::ConfirmationMismatch);
    }
    Ok(SessionKey(k_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trapdoor::keygen_user;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_setup(n: usize, rng: &mut ChaCha8Rng) -> (Vec<UserKeyMaterial>, ServerKeyMaterial) {
        let users = (0..n)
            .map(|i| keygen_user(format!("u{i}"), SecurityProfile::Test, rng).unwrap())
            .collect();
        let server = ServerKeyMaterial::generate(SecurityProfile::Test, 256, rng).unwrap();
        (users, server)
    }

    #[test]
    fn ring_of_one_completes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (users, server) = toy_setup(1, &mut rng);
        let ring: Vec<_> = users.iter().map(|u| u.public().clone()).collect();
        let (sigma, client) =
            sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
        let (resp, srv) = server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
        let key = client_confirm_round3(client, &resp).unwrap();
        assert_eq!(key, srv.session_key);
    }

    #[test]
    fn wrong_signer_keys_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (users, server) = toy_setup(3, &mut rng);
        let ring: Vec<_> = users.iter().map(|u| u.public().clone()).collect();
        let err = sign_round1(1, &users[0], &ring, server.public(), b"I", &mut rng).unwrap_err();
        assert!(matches!(err, AuthError::SignerNotInRing { .. }));
        let err = sign_round1(5, &users[0], &ring, server.public(), b"I", &mut rng).unwrap_err();
        assert!(matches!(err, AuthError::SignerNotInRing { .. }));
        let err = sign_round1(0, &users[0], &[], server.public(), b"I", &mut rng).unwrap_err();
        assert_eq!(err, AuthError::EmptyRing);
    }

    #[test]
    fn block_width_needs_headroom() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (users, _) = toy_setup(1, &mut rng);
        let server =
            ServerKeyMaterial::from_secret(GroupParams::test_group(), BigUint::from(7u32), 64)
                .unwrap();
        let ring = vec![users[0].public().clone()];
        let err = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap_err();
        assert_eq!(err, AuthError::BlockWidth(64));
    }

    #[test]
    fn mismatched_identity_tag_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (users, server) = toy_setup(2, &mut rng);
        let ring: Vec<_> = users.iter().map(|u| u.public().clone()).collect();
        let (sigma, _) = sign_round1(1, &users[1], &ring, server.public(), b"I", &mut rng).unwrap();
        assert!(server_verify_round2(&server, &sigma, b"J", b"I'", &mut rng).is_err());
    }

    #[test]
    fn tampered_server_reply_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (users, server) = toy_setup(2, &mut rng);
        let ring: Vec<_> = users.iter().map(|u| u.public().clone()).collect();
        let (sigma, client) =
            sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
        let (mut resp, _) = server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
        resp.h[0] ^= 1;
        assert_eq!(
            client_confirm_round3(client, &resp).unwrap_err(),
            AuthError::ConfirmationMismatch
        );
    }
}
