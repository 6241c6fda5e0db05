//! Prime-order subgroup arithmetic over safe-prime MODP groups.
//!
//! Elements live in the order-`q` subgroup of quadratic residues modulo a safe
//! prime `p = 2q + 1`. Encodings are fixed-length big-endian, `encoded_len`
//! bytes for elements and `scalar_len` bytes for scalars.
//!
//! This module also carries the blinding cipher used to hide the
//! Diffie-Hellman shares: `E(m) = m * M^r` where `r` is derived from the key
//! material and `M` is a per-direction blinding base obtained by hashing into
//! the group, so nobody knows its discrete logarithm.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use once_cell::sync::Lazy;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::expand;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("encoded element has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("element out of range [1, p-1]")]
    OutOfRange,
    #[error("element is not in the prime-order subgroup")]
    NotInSubgroup,
    #[error("scalar out of range")]
    ScalarOutOfRange,
    #[error("invalid group parameters: {0}")]
    InvalidParams(&'static str),
    #[error("unknown group profile {0:?}")]
    UnknownProfile(String),
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupProfile {
    /// p = 23, q = 11, g = 4. Only for hand-checkable tests.
    Toy,
    /// A fixed 256-bit safe prime for fast integration runs.
    Test256,
    /// The 2048-bit MODP group of RFC 3526 (group 14).
    Modp2048,
}

impl GroupProfile {
    pub const ALL: [GroupProfile; 3] = [GroupProfile::Toy, GroupProfile::Test256, GroupProfile::Modp2048];

    pub fn name(self) -> &'static str {
        match self {
            GroupProfile::Toy => "toy",
            GroupProfile::Test256 => "test-256",
            GroupProfile::Modp2048 => "modp-2048",
        }
    }

    pub fn params(self) -> Arc<GroupParams> {
        match self {
            GroupProfile::Toy => TOY.clone(),
            GroupProfile::Test256 => TEST_256.clone(),
            GroupProfile::Modp2048 => MODP_2048.clone(),
        }
    }
}

impl fmt::Display for GroupProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupProfile {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupProfile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| GroupError::UnknownProfile(s.to_string()))
    }
}

const TEST_256_P: &str = "aea790f40af317ad28ba3a1ac48cadf186d589bda5e846011994f25801ef929f";

const MODP_2048_P: &str = "\
    FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
    020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437\
    4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
    EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05\
    98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
    9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
    E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718\
    3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

static TOY: Lazy<Arc<GroupParams>> = Lazy::new(|| {
    Arc::new(GroupParams::from_trusted(
        Some(GroupProfile::Toy),
        BigUint::from(23u32),
        BigUint::from(4u32),
    ))
});

static TEST_256: Lazy<Arc<GroupParams>> = Lazy::new(|| {
    Arc::new(GroupParams::from_trusted(
        Some(GroupProfile::Test256),
        BigUint::parse_bytes(TEST_256_P.as_bytes(), 16).unwrap(),
        BigUint::from(4u32),
    ))
});

static MODP_2048: Lazy<Arc<GroupParams>> = Lazy::new(|| {
    Arc::new(GroupParams::from_trusted(
        Some(GroupProfile::Modp2048),
        BigUint::parse_bytes(MODP_2048_P.as_bytes(), 16).unwrap(),
        BigUint::from(2u32),
    ))
});

/// An element of the prime-order subgroup. Only obtainable through
/// [`GroupParams::validate_element`] or group operations, so holding one means
/// it passed the subgroup check.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupElement(BigUint);

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({:x})", self.0)
    }
}

/// An exponent in `[0, q-1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

/// Which party blinds: the server blinds `g^x`, the client blinds `g^y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlindDirection {
    Server,
    Client,
}

impl BlindDirection {
    fn scalar_label(self) -> &'static str {
        match self {
            BlindDirection::Server => "AS-blind-server",
            BlindDirection::Client => "AS-blind-client",
        }
    }

    fn base_label(self) -> &'static str {
        match self {
            BlindDirection::Server => "AS-blind-base-server",
            BlindDirection::Client => "AS-blind-base-client",
        }
    }
}

/// The identities the blinding pad is bound to: user `A` and provider `B`.
#[derive(Debug, Clone, Copy)]
pub struct BlindContext<'a> {
    pub username: &'a [u8],
    pub provider: &'a [u8],
}

#[derive(Clone)]
pub struct GroupParams {
    profile: Option<GroupProfile>,
    p: BigUint,
    q: BigUint,
    g: BigUint,
    encoded_len: usize,
    scalar_len: usize,
    blind_server: BigUint,
    blind_client: BigUint,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("profile", &self.profile)
            .field("bits", &self.p.bits())
            .finish()
    }
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.g == other.g
    }
}

impl Eq for GroupParams {}

impl GroupParams {
    /// Builds a group from a safe prime and a generator of the order-q
    /// subgroup, checking both.
    pub fn new(p: BigUint, g: BigUint) -> Result<Self, GroupError> {
        if p < BigUint::from(7u32) || p.is_even() {
            return Err(GroupError::InvalidParams("modulus too small or even"));
        }
        let q: BigUint = (&p - 1u32) >> 1;
        if !is_probable_prime(&q) || !is_probable_prime(&p) {
            return Err(GroupError::InvalidParams("modulus is not a safe prime"));
        }
        if g <= BigUint::one() || g >= p {
            return Err(GroupError::InvalidParams("generator out of range"));
        }
        if !g.modpow(&q, &p).is_one() {
            return Err(GroupError::InvalidParams("generator does not have order q"));
        }
        Ok(Self::from_trusted(None, p, g))
    }

    fn from_trusted(profile: Option<GroupProfile>, p: BigUint, g: BigUint) -> Self {
        let q: BigUint = (&p - 1u32) >> 1;
        let encoded_len = (p.bits() as usize).div_ceil(8);
        let scalar_len = (q.bits() as usize).div_ceil(8);
        let mut params = GroupParams {
            profile,
            p,
            q,
            g,
            encoded_len,
            scalar_len,
            blind_server: BigUint::zero(),
            blind_client: BigUint::zero(),
        };
        params.blind_server = params.hash_to_element(BlindDirection::Server.base_label()).0;
        params.blind_client = params.hash_to_element(BlindDirection::Client.base_label()).0;
        params
    }

    pub fn profile(&self) -> Option<GroupProfile> {
        self.profile
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn order(&self) -> &BigUint {
        &self.q
    }

    pub fn encoded_len(&self) -> usize {
        self.encoded_len
    }

    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.g.clone())
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    pub fn blinding_base(&self, direction: BlindDirection) -> GroupElement {
        match direction {
            BlindDirection::Server => GroupElement(self.blind_server.clone()),
            BlindDirection::Client => GroupElement(self.blind_client.clone()),
        }
    }

    pub fn exp(&self, base: &GroupElement, e: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.p))
    }

    /// `g^e`.
    pub fn exp_gen(&self, e: &Scalar) -> GroupElement {
        GroupElement(self.g.modpow(&e.0, &self.p))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    pub fn invert(&self, a: &GroupElement) -> GroupElement {
        // a^(q-1) = a^-1 inside the order-q subgroup
        GroupElement(a.0.modpow(&(&self.q - 1u32), &self.p))
    }

    pub fn encode(&self, e: &GroupElement) -> Vec<u8> {
        left_pad(&e.0.to_bytes_be(), self.encoded_len)
    }

    /// Decodes and checks `1 <= v <= p-1` and `v^q = 1`.
    pub fn validate_element(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        if bytes.len() != self.encoded_len {
            return Err(GroupError::WrongLength { expected: self.encoded_len, got: bytes.len() });
        }
        let v = BigUint::from_bytes_be(bytes);
        if v.is_zero() || v >= self.p {
            return Err(GroupError::OutOfRange);
        }
        if !v.modpow(&self.q, &self.p).is_one() {
            return Err(GroupError::NotInSubgroup);
        }
        Ok(GroupElement(v))
    }

    pub fn scalar(&self, value: BigUint) -> Result<Scalar, GroupError> {
        if value >= self.q {
            return Err(GroupError::ScalarOutOfRange);
        }
        Ok(Scalar(value))
    }

    pub fn scalar_from_u64(&self, value: u64) -> Result<Scalar, GroupError> {
        self.scalar(BigUint::from(value))
    }

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        left_pad(&s.0.to_bytes_be(), self.scalar_len)
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != self.scalar_len {
            return Err(GroupError::WrongLength { expected: self.scalar_len, got: bytes.len() });
        }
        self.scalar(BigUint::from_bytes_be(bytes))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q)
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        Scalar((&self.q - &a.0) % &self.q)
    }

    /// Uniform scalar in `[1, q-1]` by rejection sampling.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        let bits = self.q.bits() as usize;
        let top_mask = match bits % 8 {
            0 => 0xff,
            r => (1u8 << r) - 1,
        };
        let mut buf = vec![0u8; self.scalar_len];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= top_mask;
            let v = BigUint::from_bytes_be(&buf);
            if !v.is_zero() && v < self.q {
                return Scalar(v);
            }
        }
    }

    /// Expands to `2 * bitlen(q)` bits and reduces modulo `q`.
    pub fn hash_to_scalar(&self, label: &str, fields: &[&[u8]]) -> Scalar {
        let len = (2 * self.q.bits() as usize).div_ceil(8);
        Scalar(BigUint::from_bytes_be(&expand(label, fields, len)) % &self.q)
    }

    /// Like [`hash_to_scalar`](Self::hash_to_scalar) but never zero: on a zero
    /// result the fields are re-hashed with an appended 4-byte retry counter.
    pub fn hash_to_nonzero_scalar(&self, label: &str, fields: &[&[u8]]) -> Scalar {
        let s = self.hash_to_scalar(label, fields);
        if !s.is_zero() {
            return s;
        }
        let mut retry: u32 = 1;
        loop {
            let counter = retry.to_be_bytes();
            let mut extended: Vec<&[u8]> = fields.to_vec();
            extended.push(&counter);
            let s = self.hash_to_scalar(label, &extended);
            if !s.is_zero() {
                return s;
            }
            retry += 1;
        }
    }

    /// Squares a wide hash output so the result lands in the QR subgroup.
    /// Rejects 0 and 1 with a retry counter.
    pub fn hash_to_element(&self, label: &str) -> GroupElement {
        let len = (2 * self.p.bits() as usize).div_ceil(8);
        let mut retry: u32 = 0;
        loop {
            let counter = retry.to_be_bytes();
            let fields: &[&[u8]] = if retry == 0 { &[] } else { &[&counter] };
            let t = BigUint::from_bytes_be(&expand(label, fields, len)) % &self.p;
            let e = (&t * &t) % &self.p;
            if !e.is_zero() && !e.is_one() {
                return GroupElement(e);
            }
            retry += 1;
        }
    }

    fn blind_exponent(&self, key: &[u8], direction: BlindDirection, ctx: &BlindContext<'_>) -> Scalar {
        self.hash_to_scalar(direction.scalar_label(), &[ctx.username, ctx.provider, key])
    }

    /// `m * base^r`.
    pub fn blind_with_base(&self, m: &GroupElement, base: &GroupElement, r: &Scalar) -> GroupElement {
        self.mul(m, &self.exp(base, r))
    }

    /// `c * base^(q-r)`, the inverse of [`blind_with_base`](Self::blind_with_base).
    pub fn unblind_with_base(&self, c: &GroupElement, base: &GroupElement, r: &Scalar) -> GroupElement {
        self.mul(c, &self.exp(base, &self.scalar_neg(r)))
    }

    pub fn blind_encrypt(
        &self,
        key: &[u8],
        direction: BlindDirection,
        ctx: &BlindContext<'_>,
        m: &GroupElement,
    ) -> GroupElement {
        let r = self.blind_exponent(key, direction, ctx);
        self.blind_with_base(m, &self.blinding_base(direction), &r)
    }

    pub fn blind_decrypt(
        &self,
        key: &[u8],
        direction: BlindDirection,
        ctx: &BlindContext<'_>,
        c: &GroupElement,
    ) -> GroupElement {
        let r = self.blind_exponent(key, direction, ctx);
        self.unblind_with_base(c, &self.blinding_base(direction), &r)
    }
}

fn left_pad(bytes: &[u8], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.saturating_sub(bytes.len())];
    out.extend_from_slice(bytes);
    out
}

const SMALL_PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Miller-Rabin with the fixed small-prime bases above. Adequate for
/// operator-supplied parameters; not an adversarial primality proof.
fn is_probable_prime(n: &BigUint) -> bool {
    for &sp in &SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for &a in &SMALL_PRIMES {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
