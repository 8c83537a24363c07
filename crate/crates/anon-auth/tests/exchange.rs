use anon_auth::combine::{combine, solve_gap, FeistelPermutation};
use anon_auth::{
    client_confirm_round3, decode_signature, encode_signature, invert_with_nonce, keygen_user,
    server_verify_round2, sign_round1, trapdoor_forward, AuthError, GroupParams,
    SecurityProfile, ServerKeyMaterial, UserKeyMaterial, UserPublicKey,
};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pow_mod(base: u64, exp: u64, m: u64) -> u64 {
    let mut r = 1u64;
    for _ in 0..exp {
        r = r * base % m;
    }
    r
}

/// Forward map evaluated with plain integer arithmetic and repeated multiplication.
fn forward_u64(alpha: u64, beta: u64, y: u64) -> u64 {
    alpha * pow_mod(y, alpha % 11, 23) % 23 * pow_mod(4, beta % 11, 23) % 23
}

#[test]
fn toy_trapdoor_round_trip_is_exhaustive() {
    let keys = UserKeyMaterial::from_secret("u", GroupParams::test_group(), BigUint::from(3u32))
        .unwrap();
    let subgroup: Vec<u64> = (0..11).map(|e| pow_mod(4, e, 23)).collect();
    assert_eq!(subgroup.len(), 11);
    let mut cases = 0;
    for &y in &subgroup {
        for k in 0u32..11 {
            let (a, b) = invert_with_nonce(&keys, &BigUint::from(y), &BigUint::from(k)).unwrap();
            let a64 = a.to_u64_digits().first().copied().unwrap_or(0);
            let b64 = b.to_u64_digits().first().copied().unwrap_or(0);
            assert_eq!(forward_u64(a64, b64, 18), y, "y={y} K={k}");
            assert_eq!(trapdoor_forward(keys.public(), &a, &b).unwrap(), BigUint::from(y));
            cases += 1;
        }
    }
    assert_eq!(cases, 121);
}

fn ring_of(n: usize, profile: SecurityProfile, rng: &mut ChaCha8Rng) -> Vec<UserKeyMaterial> {
    (0..n)
        .map(|i| keygen_user(format!("user-{i}"), profile, rng).unwrap())
        .collect()
}

fn publics(users: &[UserKeyMaterial]) -> Vec<UserPublicKey> {
    users.iter().map(|u| u.public().clone()).collect()
}

#[test]
fn every_signer_completes_with_toy_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let server = ServerKeyMaterial::generate(SecurityProfile::Test, 256, &mut rng).unwrap();
    for n in [1usize, 2, 3, 5] {
        let users = ring_of(n, SecurityProfile::Test, &mut rng);
        let ring = publics(&users);
        for i in 0..n {
            for _ in 0..5 {
                let (sigma, client) =
                    sign_round1(i, &users[i], &ring, server.public(), b"ring", &mut rng).unwrap();
                let (resp, srv) =
                    server_verify_round2(&server, &sigma, b"ring", b"srv", &mut rng).unwrap();
                let key = client_confirm_round3(client, &resp).unwrap();
                assert_eq!(key, srv.session_key);
            }
        }
    }
}

#[test]
fn desk_profile_completes_and_keys_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(3, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    for i in 0..3 {
        let (sigma, client) =
            sign_round1(i, &users[i], &ring, server.public(), b"I", &mut rng).unwrap();
        let (resp, srv) = server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
        let key = client_confirm_round3(client, &resp).unwrap();
        assert_eq!(key, srv.session_key);
        // K_s = g^(xa xb): both sides derived the same group element.
        assert!(server.public().group.contains(&key.0));
    }
}

#[test]
fn mixed_group_sizes_in_one_ring() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = vec![
        keygen_user("toy", SecurityProfile::Test, &mut rng).unwrap(),
        keygen_user("mid", SecurityProfile::Custom { p_bits: 256, q_bits: 96 }, &mut rng).unwrap(),
        keygen_user("desk", SecurityProfile::Desk, &mut rng).unwrap(),
    ];
    let ring = publics(&users);
    for i in 0..3 {
        let (sigma, _) = sign_round1(i, &users[i], &ring, server.public(), b"I", &mut rng).unwrap();
        server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
    }
}

#[test]
fn single_byte_flips_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(2, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (sigma, _) = sign_round1(1, &users[1], &ring, server.public(), b"I", &mut rng).unwrap();
    let bytes = encode_signature(&sigma);
    for pos in 0..bytes.len() {
        let mut t = bytes.clone();
        t[pos] ^= 0x01;
        let accepted = match decode_signature(&t) {
            Ok(s) => server_verify_round2(&server, &s, b"I", b"I'", &mut rng).is_ok(),
            Err(_) => false,
        };
        assert!(!accepted, "flip at byte {pos} was accepted");
    }
}

#[test]
fn flipped_alpha_bits_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(3, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (sigma, _) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    for t in 0..3 {
        for bit in [0u64, 7, 100, 300] {
            let mut s = sigma.clone();
            let a = &mut s.pairs[t].0;
            a.set_bit(bit, !a.bit(bit));
            assert!(server_verify_round2(&server, &s, b"I", b"I'", &mut rng).is_err());
        }
    }
}

#[test]
fn replay_is_accepted_with_a_fresh_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(2, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (sigma, client) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    let (resp1, s1) = server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
    let (resp2, s2) = server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
    assert_ne!(s1.session_key, s2.session_key);
    assert_eq!(s1.x_pub, s2.x_pub);
    let key = client_confirm_round3(client, &resp1).unwrap();
    assert_eq!(key, s1.session_key);
    assert_ne!(resp1.y_pub, resp2.y_pub);
}

#[test]
fn replayed_response_fails_for_another_session() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(1, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (sigma1, _) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    let (_, client2) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    let (resp1, _) = server_verify_round2(&server, &sigma1, b"I", b"I'", &mut rng).unwrap();
    assert_eq!(
        client_confirm_round3(client2, &resp1).unwrap_err(),
        AuthError::ConfirmationMismatch
    );
}

#[test]
fn tampered_y_is_rejected_by_client() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(2, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (sigma, client) = sign_round1(1, &users[1], &ring, server.public(), b"I", &mut rng).unwrap();
    let (mut resp, _) = server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
    resp.y_pub = &resp.y_pub * &server.public().group.g % &server.public().group.p;
    assert!(client_confirm_round3(client, &resp).is_err());
}

#[test]
fn signature_for_another_server_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let honest = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let other_secret = honest.public().group.random_nonzero_exponent(&mut rng);
    let impostor =
        ServerKeyMaterial::from_secret(honest.public().group.clone(), other_secret, 1024).unwrap();
    let users = ring_of(2, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    for i in 0..2 {
        let (sigma, _) = sign_round1(i, &users[i], &ring, honest.public(), b"I", &mut rng).unwrap();
        assert_eq!(
            server_verify_round2(&impostor, &sigma, b"I", b"I'", &mut rng).unwrap_err(),
            AuthError::RingEquationMismatch
        );
    }
}

#[test]
fn non_member_key_cannot_sign_for_a_ring() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let server = ServerKeyMaterial::generate(SecurityProfile::Test, 256, &mut rng).unwrap();
    let users = ring_of(3, SecurityProfile::Test, &mut rng);
    let outsider = keygen_user("outsider", SecurityProfile::Test, &mut rng).unwrap();
    let ring = publics(&users);
    assert!(sign_round1(0, &outsider, &ring, server.public(), b"I", &mut rng).is_err());
}

#[test]
fn signatures_from_different_signers_have_the_same_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(3, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let mut shapes = Vec::new();
    for i in 0..3 {
        let (sigma, _) = sign_round1(i, &users[i], &ring, server.public(), b"I", &mut rng).unwrap();
        server_verify_round2(&server, &sigma, b"I", b"I'", &mut rng).unwrap();
        assert_eq!(sigma.ring, ring);
        assert_eq!(sigma.pairs.len(), ring.len());
        for (t, (a, _)) in sigma.pairs.iter().enumerate() {
            assert!(a < &ring[t].group.p);
        }
        shapes.push((sigma.ring.clone(), sigma.pairs.len(), sigma.identity_tag.clone()));
    }
    assert!(shapes.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sessions_use_fresh_ephemerals() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(1, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (s1, c1) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    let (s2, c2) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    assert_ne!(s1, s2);
    assert_ne!(s1.r, s2.r);
    assert_ne!(c1.x_pub(), c2.x_pub());
    let (r1, v1) = server_verify_round2(&server, &s1, b"I", b"I'", &mut rng).unwrap();
    let (r2, v2) = server_verify_round2(&server, &s2, b"I", b"I'", &mut rng).unwrap();
    let k1 = client_confirm_round3(c1, &r1).unwrap();
    let k2 = client_confirm_round3(c2, &r2).unwrap();
    assert_eq!(k1, v1.session_key);
    assert_eq!(k2, v2.session_key);
    assert_ne!(k1, k2);
}

#[test]
fn wire_round_trip_preserves_acceptance() {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let server = ServerKeyMaterial::generate(SecurityProfile::Desk, 1024, &mut rng).unwrap();
    let users = ring_of(2, SecurityProfile::Desk, &mut rng);
    let ring = publics(&users);
    let (sigma, _) = sign_round1(0, &users[0], &ring, server.public(), b"I", &mut rng).unwrap();
    let decoded = decode_signature(&encode_signature(&sigma)).unwrap();
    assert_eq!(decoded, sigma);
    server_verify_round2(&server, &decoded, b"I", b"I'", &mut rng).unwrap();
}

proptest! {
    #[test]
    fn solved_gap_closes_the_chain(
        seed in any::<u64>(),
        n in 1usize..6,
        gap_pick in any::<usize>(),
        key in proptest::collection::vec(any::<u8>(), 1..40),
    ) {
        use num_bigint::RandBigInt;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = FeistelPermutation::new(&key, 128).unwrap();
        let nu = rng.gen_biguint(128);
        let mut ys: Vec<BigUint> = (0..n).map(|_| rng.gen_biguint(128)).collect();
        let gap = gap_pick % n;
        ys[gap] = solve_gap(&e, &nu, &ys, gap).unwrap();
        prop_assert_eq!(combine(&e, &nu, &ys).unwrap(), nu);
    }

    #[test]
    fn toy_forward_matches_integer_arithmetic(alpha in 1u64..23, beta in 0u64..200) {
        let keys = UserKeyMaterial::from_secret("u", GroupParams::test_group(), BigUint::from(3u32)).unwrap();
        let got = trapdoor_forward(keys.public(), &BigUint::from(alpha), &BigUint::from(beta)).unwrap();
        prop_assert_eq!(got, BigUint::from(forward_u64(alpha, beta, 18)));
    }
}
