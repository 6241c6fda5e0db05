//! Frozen values from `tests/vectors/oracle.py`, an independent Python model.

use authstore_core::group::{BlindContext, BlindDirection, GroupProfile};
use authstore_core::pake::{channel_keys, confirmation_tag, AuthRequest, SessionKey};
use authstore_core::stretch::{derive_base_key, derive_user_key, to_auth_scalar, KdfParams, UserKey};
use authstore_core::wire::{encode, Message};
use num_bigint::BigUint;

fn toy_elem(v: u64) -> Vec<u8> {
    vec![v as u8]
}

#[test]
fn toy_exponentiation() {
    let g = GroupProfile::Toy.params();
    let three = g.scalar_from_u64(3).unwrap();
    assert_eq!(g.exp_gen(&three).value(), &BigUint::from(18u32));
    let c2 = g.scalar_from_u64(2).unwrap();
    let h = g.exp_gen(&three);
    let gc = g.exp_gen(&c2);
    assert_eq!(g.exp(&gc, &three), g.exp(&h, &c2));
    assert_eq!(g.exp(&gc, &three).value(), &BigUint::from(2u32));
}

#[test]
fn toy_blind_scalar() {
    let g = GroupProfile::Toy.params();
    let r = g.hash_to_scalar("blind-srv", &[b"alice", b"srv1", &toy_elem(18)]);
    assert_eq!(r.value(), &BigUint::from(4u32));
}

#[test]
fn test_iterated_kdf() {
    let k1 = derive_base_key(&KdfParams::test_iterated([0; 16], 1).unwrap(), b"pw").unwrap();
    assert_eq!(hex::encode(k1.as_bytes()), "ad90f4a39d185560b4dc7b829f2e6f45c931ae0c75cd4b24d4e7896f5eeb106d");
    let k3 = derive_base_key(&KdfParams::test_iterated([0; 16], 3).unwrap(), b"pw").unwrap();
    assert_eq!(hex::encode(k3.as_bytes()), "09ee3b367146eebba6626c2c6cb11c873bf126c896810e6f98e4ea448eef22b3");
}

#[test]
fn user_key_derivation() {
    // BaseKey has no public constructor; the fixed-input vector goes through the hash directly.
    let expected = "43b0fafce57102c775bdbc604786efa462987e434e7e755de8428b0eecac5268";
    let h = authstore_core::crypto::labeled_hash("AS-userkey", &[&[0x11; 32], &[0x22; 16]]);
    assert_eq!(hex::encode(h), expected);
    let base = derive_base_key(&KdfParams::test_iterated([0; 16], 1).unwrap(), b"pw").unwrap();
    let via_api = derive_user_key(&base, &[0x22; 16]);
    let via_hash = authstore_core::crypto::labeled_hash("AS-userkey", &[base.as_bytes(), &[0x22; 16]]);
    assert_eq!(via_api.as_bytes(), &via_hash);
}

#[test]
fn toy_auth_scalar() {
    let g = GroupProfile::Toy.params();
    let pi = to_auth_scalar(&UserKey::from_bytes([0x33; 32]), &g);
    assert_eq!(pi.value(), &BigUint::from(3u32));
}

#[test]
fn session_derivations() {
    let sk = SessionKey::from_bytes([0x44; 32]);
    let keys = channel_keys(&sk);
    assert_eq!(hex::encode(keys.client_to_server), "3674b777b5e2a5debd1485ee8b1e2049bd6cbc2c3948d73795e30f416d4a791d");
    assert_eq!(hex::encode(keys.server_to_client), "8e45453aa354c74aeb0955a077a7bb7aaa3c60ee791e6e1900781fe797051e5e");
    assert_eq!(hex::encode(confirmation_tag(&sk)), "bb155231965a9f29ddd425703cc8bd9777660a3b01395b116f0cbe325c7d1301");
}

#[test]
fn toy_blinding_bases_and_cipher() {
    let g = GroupProfile::Toy.params();
    assert_eq!(g.blinding_base(BlindDirection::Server).value(), &BigUint::from(18u32));
    assert_eq!(g.blinding_base(BlindDirection::Client).value(), &BigUint::from(3u32));
    let m = g.validate_element(&toy_elem(16)).unwrap();
    let ctx = BlindContext { username: b"alice", provider: b"srv1" };
    let c = g.blind_encrypt(&toy_elem(18), BlindDirection::Server, &ctx, &m);
    assert_eq!(c.value(), &BigUint::from(9u32));
    assert_eq!(g.blind_decrypt(&toy_elem(18), BlindDirection::Server, &ctx, &c), m);
}

#[test]
fn toy_blinding_with_generator_base() {
    // g^3 = 18, c = 16 * 18 mod 23
    let g = GroupProfile::Toy.params();
    let m = g.validate_element(&toy_elem(16)).unwrap();
    let r = g.scalar_from_u64(3).unwrap();
    let c = g.blind_with_base(&m, &g.generator(), &r);
    assert_eq!(c.value(), &BigUint::from(12u32));
    assert_eq!(g.unblind_with_base(&c, &g.generator(), &r), m);
}

#[test]
fn m1_frame() {
    let frame = encode(&Message::AuthRequest(AuthRequest { username: "al".into() }));
    assert_eq!(hex::encode(frame), "00000005010002616c");
}
