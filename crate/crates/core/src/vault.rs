//! Password-protected credential vault with a one-slot key chain.
//!
//! The payload is sealed under a random `k_sym`; `k_sym` is wrapped under
//! `K_data = U(P_data, pw)`. Changing the password rewraps `k_sym` and leaves
//! the payload bytes untouched.
//!
//! File layout:
//!
//! ```text
//! "AVLT" | version u8 | KdfParams (29) | user_salt (16) | wrap nonce (12)
//!        | wrapped key (48) | payload nonce (12) | payload len u32be | payload
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::{fmt, fs, io};

use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

use crate::account::write_atomic;
use crate::crypto::{self, NONCE_LEN, TAG_LEN};
use crate::stretch::{KdfParams, KeyCache, StretchError, UserKey, UserKeyParams, KEY_LEN, USER_KEY_PARAMS_LEN};

pub const MAGIC: &[u8; 4] = b"AVLT";
pub const VERSION: u8 = 1;
pub const WRAPPED_KEY_LEN: usize = KEY_LEN + TAG_LEN;
/// Bytes from the magic through the wrap nonce; authenticated with the wrapped key.
const WRAP_AAD_LEN: usize = 4 + 1 + USER_KEY_PARAMS_LEN + NONCE_LEN;
pub const HEADER_LEN: usize = WRAP_AAD_LEN + WRAPPED_KEY_LEN + NONCE_LEN + 4;

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("wrong password for vault")]
    VaultLocked,
    #[error("vault is corrupt: {0}")]
    CorruptVault(&'static str),
    #[error("record already exists")]
    DuplicateRecord,
    #[error("record not found")]
    NotFound,
    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),
    #[error(transparent)]
    Stretch(#[from] StretchError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    WebPassword,
    UserKeyCache,
}

impl RecordKind {
    fn tag(self) -> u8 {
        match self {
            RecordKind::WebPassword => 1,
            RecordKind::UserKeyCache => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(RecordKind::WebPassword),
            2 => Some(RecordKind::UserKeyCache),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::WebPassword => "web-password",
            RecordKind::UserKeyCache => "user-key-cache",
        }
    }
}

/// One stored credential. A `UserKeyCache` record holds `K_u` and `P_u`
/// for a provider; base keys are never stored.
#[derive(Clone, PartialEq, Eq)]
pub struct CredentialRecord {
    pub site: String,
    pub login: String,
    pub secret: Vec<u8>,
    pub kind: RecordKind,
    pub user_key_params: Option<UserKeyParams>,
}

impl fmt::Debug for CredentialRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CredentialRecord")
            .field("site", &self.site)
            .field("login", &self.login)
            .field("kind", &self.kind)
            .field("secret", &"<redacted>")
            .finish()
    }
}

impl Drop for CredentialRecord {
    fn drop(&mut self) {
        self.secret.zeroize();
    }
}

impl CredentialRecord {
    pub fn web_password(site: &str, login: &str, password: &[u8]) -> Self {
        CredentialRecord {
            site: site.to_owned(),
            login: login.to_owned(),
            secret: password.to_vec(),
            kind: RecordKind::WebPassword,
            user_key_params: None,
        }
    }

    pub fn user_key_cache(site: &str, login: &str, key: &UserKey, params: UserKeyParams) -> Self {
        CredentialRecord {
            site: site.to_owned(),
            login: login.to_owned(),
            secret: key.as_bytes().to_vec(),
            kind: RecordKind::UserKeyCache,
            user_key_params: Some(params),
        }
    }

    /// The cached user key, for `UserKeyCache` records.
    pub fn user_key(&self) -> Option<(UserKey, UserKeyParams)> {
        if self.kind != RecordKind::UserKeyCache {
            return None;
        }
        let bytes: [u8; KEY_LEN] = self.secret.as_slice().try_into().ok()?;
        Some((UserKey::from_bytes(bytes), self.user_key_params?))
    }

    fn validate(&self) -> Result<(), VaultError> {
        match self.kind {
            RecordKind::WebPassword if self.user_key_params.is_some() => {
                Err(VaultError::InvalidRecord("web-password record carries key params"))
            }
            RecordKind::UserKeyCache if self.user_key_params.is_none() || self.secret.len() != KEY_LEN => {
                Err(VaultError::InvalidRecord("user-key-cache record needs a 32-byte key and params"))
            }
            _ => Ok(()),
        }
    }

    fn sort_key(&self) -> (String, String) {
        (self.site.clone(), self.login.clone())
    }
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Count-prefixed list of records in the iteration order given.
pub fn encode_records<'a>(records: impl ExactSizeIterator<Item = &'a CredentialRecord>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(records.len() as u32).to_be_bytes());
    for r in records {
        put_field(&mut out, r.site.as_bytes());
        put_field(&mut out, r.login.as_bytes());
        put_field(&mut out, &r.secret);
        out.push(r.kind.tag());
        match &r.user_key_params {
            Some(p) => {
                out.push(1);
                out.extend_from_slice(&p.encode());
            }
            None => out.push(0),
        }
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VaultError> {
        if self.0.len() < n {
            return Err(VaultError::CorruptVault("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, VaultError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, VaultError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn field(&mut self) -> Result<&'a [u8], VaultError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn string(&mut self) -> Result<String, VaultError> {
        String::from_utf8(self.field()?.to_vec()).map_err(|_| VaultError::CorruptVault("non-UTF-8 text field"))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<CredentialRecord>, VaultError> {
    let mut c = Cursor(bytes);
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(bytes.len() / 14));
    for _ in 0..count {
        let site = c.string()?;
        let login = c.string()?;
        let secret = c.field()?.to_vec();
        let kind = RecordKind::from_tag(c.u8()?).ok_or(VaultError::CorruptVault("unknown record kind"))?;
        let user_key_params = match c.u8()? {
            0 => None,
            1 => Some(
                UserKeyParams::decode(c.take(USER_KEY_PARAMS_LEN)?)
                    .map_err(|_| VaultError::CorruptVault("bad record key params"))?,
            ),
            _ => return Err(VaultError::CorruptVault("bad params flag")),
        };
        let record = CredentialRecord { site, login, secret, kind, user_key_params };
        record.validate().map_err(|_| VaultError::CorruptVault("invalid record"))?;
        out.push(record);
    }
    if !c.0.is_empty() {
        return Err(VaultError::CorruptVault("trailing bytes"));
    }
    Ok(out)
}

/// `P_data`: key parameters plus the wrapped `k_sym`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataParams {
    pub u_params: UserKeyParams,
    pub wrap_nonce: [u8; NONCE_LEN],
    pub wrapped_key: [u8; WRAPPED_KEY_LEN],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultDocument {
    pub data_params: DataParams,
    pub payload_nonce: [u8; NONCE_LEN],
    pub payload: Vec<u8>,
}

fn wrap_aad(u_params: &UserKeyParams, wrap_nonce: &[u8; NONCE_LEN]) -> Vec<u8> {
    let mut aad = Vec::with_capacity(WRAP_AAD_LEN);
    aad.extend_from_slice(MAGIC);
    aad.push(VERSION);
    aad.extend_from_slice(&u_params.encode());
    aad.extend_from_slice(wrap_nonce);
    aad
}

fn wrap_key<R: RngCore + CryptoRng>(k_data: &UserKey, u_params: UserKeyParams, k_sym: &[u8; KEY_LEN], rng: &mut R) -> DataParams {
    let mut wrap_nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut wrap_nonce);
    let sealed = crypto::seal(k_data.as_bytes(), &wrap_nonce, &wrap_aad(&u_params, &wrap_nonce), k_sym);
    let wrapped_key = sealed.as_slice().try_into().expect("seal adds a fixed tag");
    DataParams { u_params, wrap_nonce, wrapped_key }
}

fn seal_payload<R: RngCore + CryptoRng>(k_sym: &[u8; KEY_LEN], plaintext: &[u8], rng: &mut R) -> ([u8; NONCE_LEN], Vec<u8>) {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    (nonce, crypto::seal(k_sym, &nonce, b"", plaintext))
}

impl VaultDocument {
    /// A fresh empty vault. `kdf` is `P_K`; a fresh `user_salt` completes `P_data`.
    pub fn create<R: RngCore + CryptoRng>(
        password: &[u8],
        kdf: &KdfParams,
        cache: &KeyCache,
        rng: &mut R,
    ) -> Result<Self, VaultError> {
        let u_params = UserKeyParams::generate(*kdf, rng);
        let k_data = cache.user_key_from_password(&u_params, password)?;
        let mut k_sym = Zeroizing::new([0u8; KEY_LEN]);
        rng.fill_bytes(k_sym.as_mut());
        let data_params = wrap_key(&k_data, u_params, &k_sym, rng);
        let (payload_nonce, payload) = seal_payload(&k_sym, &encode_records(std::iter::empty()), rng);
        Ok(VaultDocument { data_params, payload_nonce, payload })
    }

    fn unwrap_key(&self, password: &[u8], cache: &KeyCache) -> Result<Zeroizing<[u8; KEY_LEN]>, VaultError> {
        let k_data = cache.user_key_from_password(&self.data_params.u_params, password)?;
        self.unwrap_with(&k_data)
    }

    fn unwrap_with(&self, k_data: &UserKey) -> Result<Zeroizing<[u8; KEY_LEN]>, VaultError> {
        let dp = &self.data_params;
        let plain = Zeroizing::new(
            crypto::open(k_data.as_bytes(), &dp.wrap_nonce, &wrap_aad(&dp.u_params, &dp.wrap_nonce), &dp.wrapped_key)
                .map_err(|_| VaultError::VaultLocked)?,
        );
        let mut k_sym = Zeroizing::new([0u8; KEY_LEN]);
        if plain.len() != KEY_LEN {
            return Err(VaultError::CorruptVault("wrapped key length"));
        }
        k_sym.copy_from_slice(&plain);
        Ok(k_sym)
    }

    pub fn open(&self, password: &[u8], cache: &KeyCache) -> Result<VaultHandle, VaultError> {
        let k_sym = self.unwrap_key(password, cache)?;
        self.open_payload(k_sym)
    }

    /// Opens with `K_data` already derived, e.g. from a cached base key.
    pub fn open_with_user_key(&self, k_data: &UserKey) -> Result<VaultHandle, VaultError> {
        let k_sym = self.unwrap_with(k_data)?;
        self.open_payload(k_sym)
    }

    fn open_payload(&self, k_sym: Zeroizing<[u8; KEY_LEN]>) -> Result<VaultHandle, VaultError> {
        let plain = Zeroizing::new(
            crypto::open(&k_sym, &self.payload_nonce, b"", &self.payload)
                .map_err(|_| VaultError::CorruptVault("payload authentication failed"))?,
        );
        let mut records = BTreeMap::new();
        for r in decode_records(&plain)? {
            if records.insert(r.sort_key(), r).is_some() {
                return Err(VaultError::CorruptVault("duplicate record"));
            }
        }
        Ok(VaultHandle { doc: self.clone(), k_sym, records, dirty: false })
    }

    /// Rewraps `k_sym` under a key from `new_password`; the payload is copied verbatim.
    pub fn change_password<R: RngCore + CryptoRng>(
        &self,
        old_password: &[u8],
        new_password: &[u8],
        new_kdf: &KdfParams,
        cache: &KeyCache,
        rng: &mut R,
    ) -> Result<VaultDocument, VaultError> {
        let k_sym = self.unwrap_key(old_password, cache)?;
        let u_params = UserKeyParams::generate(*new_kdf, rng);
        let k_data = cache.user_key_from_password(&u_params, new_password)?;
        Ok(VaultDocument {
            data_params: wrap_key(&k_data, u_params, &k_sym, rng),
            payload_nonce: self.payload_nonce,
            payload: self.payload.clone(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let dp = &self.data_params;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&wrap_aad(&dp.u_params, &dp.wrap_nonce));
        out.extend_from_slice(&dp.wrapped_key);
        out.extend_from_slice(&self.payload_nonce);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VaultError> {
        let mut c = Cursor(bytes);
        if c.take(4)? != MAGIC {
            return Err(VaultError::CorruptVault("bad magic"));
        }
        if c.u8()? != VERSION {
            return Err(VaultError::CorruptVault("unsupported version"));
        }
        let u_params = UserKeyParams::decode(c.take(USER_KEY_PARAMS_LEN)?)
            .map_err(|_| VaultError::CorruptVault("bad key parameters"))?;
        let wrap_nonce = c.take(NONCE_LEN)?.try_into().unwrap();
        let wrapped_key = c.take(WRAPPED_KEY_LEN)?.try_into().unwrap();
        let payload_nonce = c.take(NONCE_LEN)?.try_into().unwrap();
        let payload = c.field()?.to_vec();
        if !c.0.is_empty() {
            return Err(VaultError::CorruptVault("trailing bytes"));
        }
        if payload.len() < TAG_LEN {
            return Err(VaultError::CorruptVault("payload shorter than tag"));
        }
        Ok(VaultDocument { data_params: DataParams { u_params, wrap_nonce, wrapped_key }, payload_nonce, payload })
    }

    pub fn read_file(path: &Path) -> Result<Self, VaultError> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), VaultError> {
        write_atomic(path, &self.encode())?;
        Ok(())
    }
}

/// An unlocked vault. Single owner; the payload is resealed only when
/// records changed since the last [`VaultHandle::document`].
pub struct VaultHandle {
    doc: VaultDocument,
    k_sym: Zeroizing<[u8; KEY_LEN]>,
    records: BTreeMap<(String, String), CredentialRecord>,
    dirty: bool,
}

impl fmt::Debug for VaultHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VaultHandle").field("records", &self.records.len()).field("dirty", &self.dirty).finish()
    }
}

impl VaultHandle {
    pub fn add(&mut self, record: CredentialRecord) -> Result<(), VaultError> {
        record.validate()?;
        let key = record.sort_key();
        if self.records.contains_key(&key) {
            return Err(VaultError::DuplicateRecord);
        }
        self.records.insert(key, record);
        self.dirty = true;
        Ok(())
    }

    /// Inserts or replaces the record for `(site, login)`.
    pub fn upsert(&mut self, record: CredentialRecord) -> Result<(), VaultError> {
        record.validate()?;
        if self.records.get(&record.sort_key()) != Some(&record) {
            self.records.insert(record.sort_key(), record);
            self.dirty = true;
        }
        Ok(())
    }

    pub fn get(&self, site: &str, login: &str) -> Result<&CredentialRecord, VaultError> {
        self.records.get(&(site.to_owned(), login.to_owned())).ok_or(VaultError::NotFound)
    }

    pub fn remove(&mut self, site: &str, login: &str) -> Result<CredentialRecord, VaultError> {
        let r = self.records.remove(&(site.to_owned(), login.to_owned())).ok_or(VaultError::NotFound)?;
        self.dirty = true;
        Ok(r)
    }

    /// Records sorted by `(site, login)`.
    pub fn list(&self) -> Vec<&CredentialRecord> {
        self.records.values().collect()
    }

    pub fn find_site(&self, site: &str) -> Vec<&CredentialRecord> {
        self.records.values().filter(|r| r.site == site).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn data_params(&self) -> &DataParams {
        &self.doc.data_params
    }

    pub fn document<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> VaultDocument {
        if self.dirty {
            let plain = Zeroizing::new(encode_records(self.records.values()));
            let (nonce, payload) = seal_payload(&self.k_sym, &plain, rng);
            self.doc.payload_nonce = nonce;
            self.doc.payload = payload;
            self.dirty = false;
        }
        self.doc.clone()
    }

    pub fn change_password<R: RngCore + CryptoRng>(
        &mut self,
        new_password: &[u8],
        new_kdf: &KdfParams,
        cache: &KeyCache,
        rng: &mut R,
    ) -> Result<(), VaultError> {
        let u_params = UserKeyParams::generate(*new_kdf, rng);
        let k_data = cache.user_key_from_password(&u_params, new_password)?;
        self.doc.data_params = wrap_key(&k_data, u_params, &self.k_sym, rng);
        Ok(())
    }

    pub fn save<R: RngCore + CryptoRng>(&mut self, path: &Path, rng: &mut R) -> Result<(), VaultError> {
        self.document(rng).write_file(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn kdf() -> KdfParams {
        KdfParams::test_iterated([7; 16], 3).unwrap()
    }

    #[test]
    fn create_open_empty() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let cache = KeyCache::new();
        let doc = VaultDocument::create(b"pw", &kdf(), &cache, &mut rng).unwrap();
        assert!(doc.open(b"pw", &cache).unwrap().is_empty());
        assert!(matches!(doc.open(b"nope", &cache), Err(VaultError::VaultLocked)));
    }

    #[test]
    fn two_creates_differ() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let cache = KeyCache::new();
        let a = VaultDocument::create(b"pw", &kdf(), &cache, &mut rng).unwrap();
        let b = VaultDocument::create(b"pw", &kdf(), &cache, &mut rng).unwrap();
        assert_ne!(a.data_params.wrapped_key, b.data_params.wrapped_key);
        let ka = a.open(b"pw", &cache).unwrap().k_sym;
        let kb = b.open(b"pw", &cache).unwrap().k_sym;
        assert_ne!(*ka, *kb);
    }

    #[test]
    fn layout_offsets() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let cache = KeyCache::new();
        let doc = VaultDocument::create(b"pw", &kdf(), &cache, &mut rng).unwrap();
        let bytes = doc.encode();
        assert_eq!(HEADER_LEN, 4 + 1 + 29 + 16 + 12 + 48 + 12 + 4);
        assert_eq!(&bytes[..5], b"AVLT\x01");
        assert_eq!(&bytes[5..34], &kdf().encode());
        assert_eq!(&bytes[34..50], &doc.data_params.u_params.user_salt);
        assert_eq!(&bytes[62..110], &doc.data_params.wrapped_key);
        assert_eq!(u32::from_be_bytes(bytes[122..126].try_into().unwrap()) as usize, bytes.len() - HEADER_LEN);
        assert_eq!(VaultDocument::decode(&bytes).unwrap(), doc);
    }

    #[test]
    fn crud_and_ordering() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let cache = KeyCache::new();
        let mut h = VaultDocument::create(b"pw", &kdf(), &cache, &mut rng).unwrap().open(b"pw", &cache).unwrap();
        h.add(CredentialRecord::web_password("zeta.example", "bob", b"1")).unwrap();
        h.add(CredentialRecord::web_password("alpha.example", "zed", b"2")).unwrap();
        h.add(CredentialRecord::web_password("alpha.example", "amy", b"3")).unwrap();
        assert!(matches!(h.add(CredentialRecord::web_password("alpha.example", "amy", b"4")), Err(VaultError::DuplicateRecord)));
        assert!(matches!(h.get("none", "x"), Err(VaultError::NotFound)));
        let order: Vec<_> = h.list().iter().map(|r| (r.site.clone(), r.login.clone())).collect();
        let reopened = h.document(&mut rng).open(b"pw", &cache).unwrap();
        let order2: Vec<_> = reopened.list().iter().map(|r| (r.site.clone(), r.login.clone())).collect();
        assert_eq!(order, order2);
        assert_eq!(order[0], ("alpha.example".into(), "amy".into()));
        assert_eq!(reopened.get("zeta.example", "bob").unwrap().secret, b"1");
    }

    #[test]
    fn tampered_payload_is_corrupt() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cache = KeyCache::new();
        let mut doc = VaultDocument::create(b"pw", &kdf(), &cache, &mut rng).unwrap();
        doc.payload[0] ^= 1;
        assert!(matches!(doc.open(b"pw", &cache), Err(VaultError::CorruptVault(_))));
    }

    #[test]
    fn rewrap_keeps_payload() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let cache = KeyCache::new();
        let mut h = VaultDocument::create(b"old", &kdf(), &cache, &mut rng).unwrap().open(b"old", &cache).unwrap();
        h.add(CredentialRecord::web_password("s", "l", b"secret")).unwrap();
        let doc = h.document(&mut rng);
        let new_kdf = kdf().with_fresh_salt(&mut rng);
        let doc2 = doc.change_password(b"old", b"new", &new_kdf, &cache, &mut rng).unwrap();
        assert_eq!(doc.payload, doc2.payload);
        assert_eq!(doc.payload_nonce, doc2.payload_nonce);
        assert_ne!(doc.data_params.wrapped_key, doc2.data_params.wrapped_key);
        assert!(matches!(doc2.open(b"old", &cache), Err(VaultError::VaultLocked)));
        assert_eq!(doc2.open(b"new", &cache).unwrap().get("s", "l").unwrap().secret, b"secret");
        assert!(matches!(doc.change_password(b"bad", b"x", &new_kdf, &cache, &mut rng), Err(VaultError::VaultLocked)));
    }

    #[test]
    fn handle_rewrap_does_not_reseal() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let cache = KeyCache::new();
        let mut h = VaultDocument::create(b"a", &kdf(), &cache, &mut rng).unwrap().open(b"a", &cache).unwrap();
        let before = h.document(&mut rng).payload;
        h.change_password(b"b", &kdf(), &cache, &mut rng).unwrap();
        assert_eq!(h.document(&mut rng).payload, before);
    }

    #[test]
    fn key_cache_record_validation() {
        let p = UserKeyParams::new(kdf(), [1; 16]);
        let good = CredentialRecord::user_key_cache("prov", "alice", &UserKey::from_bytes([9; 32]), p);
        assert!(good.validate().is_ok());
        assert_eq!(good.user_key().unwrap().0.as_bytes(), &[9; 32]);
        let mut bad = good.clone();
        bad.secret.pop();
        assert!(bad.validate().is_err());
        let mut bad = CredentialRecord::web_password("a", "b", b"c");
        bad.user_key_params = Some(UserKeyParams::new(kdf(), [1; 16]));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(VaultDocument::decode(b"").is_err());
        assert!(VaultDocument::decode(b"XXXX\x01").is_err());
        assert!(decode_records(&[0, 0, 0, 1]).is_err());
        assert!(decode_records(&[0, 0, 0, 0, 1]).is_err());
    }
}
