//! Password stretching and user-key derivation.
//!
//! A password is stretched once into a [`BaseKey`] under [`KdfParams`]; any
//! number of cheap [`UserKey`]s are then derived from the base key with
//! distinct salts. Base keys only ever live in memory (see [`KeyCache`]).

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use argon2::{Algorithm, Argon2, Version};
use parking_lot::Mutex;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::crypto::labeled_hash;
use crate::group::{GroupParams, Scalar};

pub const SALT_LEN: usize = 16;
pub const KEY_LEN: usize = 32;
/// Encoded size of [`KdfParams`]: id, salt, three 4-byte costs.
pub const KDF_PARAMS_LEN: usize = 1 + SALT_LEN + 12;
/// Encoded size of [`UserKeyParams`].
pub const USER_KEY_PARAMS_LEN: usize = KDF_PARAMS_LEN + SALT_LEN;

pub const MIN_MEM_KIB: u32 = 8;
pub const MAX_MEM_KIB: u32 = 4 * 1024 * 1024;
pub const MAX_MEMORY_HARD_PASSES: u32 = 1024;
pub const MAX_PARALLELISM: u32 = 64;
pub const MAX_TEST_ITERATIONS: u32 = 10_000_000;

pub const DEFAULT_MEM_KIB: u32 = 64 * 1024;
pub const DEFAULT_PASSES: u32 = 3;
pub const DEFAULT_PARALLELISM: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StretchError {
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("unsupported KDF algorithm id {0}")]
    UnsupportedAlgorithm(u8),
    #[error("KDF cost parameters out of range")]
    CostOutOfRange,
    #[error("malformed parameter encoding")]
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KdfAlgorithm {
    /// Argon2id.
    MemoryHard,
    /// Iterated SHA-256; reproducible by a few lines of any language.
    TestIterated,
}

impl KdfAlgorithm {
    pub fn id(self) -> u8 {
        match self {
            KdfAlgorithm::MemoryHard => 1,
            KdfAlgorithm::TestIterated => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self, StretchError> {
        match id {
            1 => Ok(KdfAlgorithm::MemoryHard),
            2 => Ok(KdfAlgorithm::TestIterated),
            other => Err(StretchError::UnsupportedAlgorithm(other)),
        }
    }
}

/// Salt and cost parameters for base-key derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KdfParams {
    pub algorithm: KdfAlgorithm,
    pub salt: [u8; SALT_LEN],
    pub mem_cost: u32,
    pub time_cost: u32,
    pub parallelism: u32,
}

impl KdfParams {
    pub fn memory_hard(salt: [u8; SALT_LEN], mem_cost: u32, time_cost: u32, parallelism: u32) -> Result<Self, StretchError> {
        let params = KdfParams { algorithm: KdfAlgorithm::MemoryHard, salt, mem_cost, time_cost, parallelism };
        params.validate()?;
        Ok(params)
    }

    pub fn test_iterated(salt: [u8; SALT_LEN], iterations: u32) -> Result<Self, StretchError> {
        let params = KdfParams {
            algorithm: KdfAlgorithm::TestIterated,
            salt,
            mem_cost: 0,
            time_cost: iterations,
            parallelism: 0,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same algorithm and costs, fresh salt.
    pub fn with_fresh_salt<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        KdfParams { salt, ..*self }
    }

    pub fn validate(&self) -> Result<(), StretchError> {
        let ok = match self.algorithm {
            KdfAlgorithm::MemoryHard => {
                (1..=MAX_MEMORY_HARD_PASSES).contains(&self.time_cost)
                    && (1..=MAX_PARALLELISM).contains(&self.parallelism)
                    && self.mem_cost >= MIN_MEM_KIB.max(8 * self.parallelism)
                    && self.mem_cost <= MAX_MEM_KIB
            }
            KdfAlgorithm::TestIterated => {
                (1..=MAX_TEST_ITERATIONS).contains(&self.time_cost) && self.mem_cost == 0 && self.parallelism == 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(StretchError::CostOutOfRange)
        }
    }

    pub fn encode(&self) -> [u8; KDF_PARAMS_LEN] {
        let mut out = [0u8; KDF_PARAMS_LEN];
        out[0] = self.algorithm.id();
        out[1..17].copy_from_slice(&self.salt);
        out[17..21].copy_from_slice(&self.mem_cost.to_be_bytes());
        out[21..25].copy_from_slice(&self.time_cost.to_be_bytes());
        out[25..29].copy_from_slice(&self.parallelism.to_be_bytes());
        out
    }

    /// Decodes and validates.
    pub fn decode(bytes: &[u8]) -> Result<Self, StretchError> {
        if bytes.len() != KDF_PARAMS_LEN {
            return Err(StretchError::Malformed);
        }
        let algorithm = KdfAlgorithm::from_id(bytes[0])?;
        let word = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let params = KdfParams {
            algorithm,
            salt: bytes[1..17].try_into().unwrap(),
            mem_cost: word(17),
            time_cost: word(21),
            parallelism: word(25),
        };
        params.validate()?;
        Ok(params)
    }
}

/// The stretched password. Zeroized on drop and deliberately without any
/// serialization.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct BaseKey([u8; KEY_LEN]);

impl BaseKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for BaseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BaseKey(..)")
    }
}

/// `P_u`: the base-key parameters plus the per-purpose user salt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UserKeyParams {
    pub base: KdfParams,
    pub user_salt: [u8; SALT_LEN],
}

impl UserKeyParams {
    pub fn new(base: KdfParams, user_salt: [u8; SALT_LEN]) -> Self {
        UserKeyParams { base, user_salt }
    }

    /// Fresh user salt under existing base params.
    pub fn generate<R: RngCore + CryptoRng>(base: KdfParams, rng: &mut R) -> Self {
        let mut user_salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut user_salt);
        UserKeyParams { base, user_salt }
    }

    pub fn encode(&self) -> [u8; USER_KEY_PARAMS_LEN] {
        let mut out = [0u8; USER_KEY_PARAMS_LEN];
        out[..KDF_PARAMS_LEN].copy_from_slice(&self.base.encode());
        out[KDF_PARAMS_LEN..].copy_from_slice(&self.user_salt);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, StretchError> {
        if bytes.len() != USER_KEY_PARAMS_LEN {
            return Err(StretchError::Malformed);
        }
        Ok(UserKeyParams {
            base: KdfParams::decode(&bytes[..KDF_PARAMS_LEN])?,
            user_salt: bytes[KDF_PARAMS_LEN..].try_into().unwrap(),
        })
    }
}

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct UserKey([u8; KEY_LEN]);

impl UserKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        UserKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for UserKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("UserKey(..)")
    }
}

pub fn derive_base_key(params: &KdfParams, password: &[u8]) -> Result<BaseKey, StretchError> {
    if password.is_empty() {
        return Err(StretchError::EmptyPassword);
    }
    params.validate()?;
    let mut out = [0u8; KEY_LEN];
    match params.algorithm {
        KdfAlgorithm::MemoryHard => {
            let argon_params = argon2::Params::new(params.mem_cost, params.time_cost, params.parallelism, Some(KEY_LEN))
                .map_err(|_| StretchError::CostOutOfRange)?;
            Argon2::new(Algorithm::Argon2id, Version::V0x13, argon_params)
                .hash_password_into(password, &params.salt, &mut out)
                .map_err(|_| StretchError::CostOutOfRange)?;
        }
        KdfAlgorithm::TestIterated => {
            let mut hasher = Sha256::new();
            hasher.update(b"AS-kdf-test");
            hasher.update(params.salt);
            hasher.update(password);
            out = hasher.finalize().into();
            for _ in 1..params.time_cost {
                out = Sha256::digest(out).into();
            }
        }
    }
    Ok(BaseKey(out))
}

pub fn derive_user_key(base: &BaseKey, user_salt: &[u8; SALT_LEN]) -> UserKey {
    UserKey(labeled_hash("AS-userkey", &[base.as_bytes(), user_salt]))
}

/// Maps a user key to the authentication exponent `pi` in `[1, q-1]`.
pub fn to_auth_scalar(key: &UserKey, group: &GroupParams) -> Scalar {
    group.hash_to_nonzero_scalar("AS-pi", &[key.as_bytes()])
}

/// In-memory base-key cache, keyed by `H("AS-cache", params, password)`.
///
/// Also counts the KDF evaluations performed through it so callers can observe
/// cache hits.
#[derive(Default)]
pub struct KeyCache {
    entries: Mutex<HashMap<[u8; 32], BaseKey>>,
    derivations: AtomicU64,
}

impl fmt::Debug for KeyCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyCache")
            .field("entries", &self.entries.lock().len())
            .field("derivations", &self.derivations())
            .finish()
    }
}

fn cache_slot(params: &KdfParams, password: &[u8]) -> [u8; 32] {
    labeled_hash("AS-cache", &[&params.encode(), password])
}

impl KeyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, params: &KdfParams, password: &[u8], key: BaseKey) {
        self.entries.lock().insert(cache_slot(params, password), key);
    }

    pub fn lookup(&self, params: &KdfParams, password: &[u8]) -> Option<BaseKey> {
        self.entries.lock().get(&cache_slot(params, password)).cloned()
    }

    /// Cached base key, deriving and inserting it on a miss. Concurrent misses
    /// for the same slot may both derive; the values are identical.
    pub fn base_key(&self, params: &KdfParams, password: &[u8]) -> Result<BaseKey, StretchError> {
        if let Some(key) = self.lookup(params, password) {
            return Ok(key);
        }
        let key = derive_base_key(params, password)?;
        self.derivations.fetch_add(1, Ordering::Relaxed);
        self.insert(params, password, key.clone());
        Ok(key)
    }

    /// `U(P_u, pw)`.
    pub fn user_key_from_password(&self, params: &UserKeyParams, password: &[u8]) -> Result<UserKey, StretchError> {
        let base = self.base_key(&params.base, password)?;
        Ok(derive_user_key(&base, &params.user_salt))
    }

    /// Number of KDF evaluations this cache has performed.
    pub fn derivations(&self) -> u64 {
        self.derivations.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.lock().clear();
    }
}
