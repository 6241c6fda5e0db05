//! Server-side account records: registration, credential replacement,
//! one-time reset verifiers and the `accounts.db` file.
//!
//! # File format
//!
//! ```text
//! "ASDB" | version (1)
//! record*:
//!   u16 username length | username | KdfParams (29) | user salt (16) | h (element length)
//!   | reset flag (1) | [h_temp (element length) | expires_at u64 | consumed (1)]
//!   | created_at u64 | updated_at u64 | checksum (4)
//! ```
//!
//! Integers are big-endian. The checksum is the first four bytes of SHA-256
//! over the record bytes that precede it. New accounts are appended; any
//! update rewrites the file through a temporary file and a rename.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::crypto::labeled_hash;
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::pake::{AuthGrant, Verifier, VerifierKind};
use crate::stretch::{KdfParams, UserKeyParams, KDF_PARAMS_LEN, SALT_LEN};

pub const MAX_USERNAME_BYTES: usize = 64;
/// Reset verifiers expire after 15 minutes.
pub const RESET_LIFETIME_SECS: u64 = 15 * 60;

const DB_MAGIC: &[u8; 4] = b"ASDB";
const DB_VERSION: u8 = 1;
const CHECKSUM_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum AccountError {
    #[error("user already exists")]
    UserExists,
    #[error("invalid username")]
    InvalidUsername,
    #[error("invalid verifier")]
    InvalidVerifier,
    #[error("unknown user")]
    UnknownUser,
    #[error("not authenticated for this account")]
    NotAuthenticated,
    #[error("account store is corrupt: {0}")]
    CorruptStore(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lowercase + NFC, 1 to 64 bytes, no control characters.
pub fn canonicalize_username(raw: &str) -> Result<String, AccountError> {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    let canonical: String = lowered.nfc().collect();
    if canonical.is_empty() || canonical.len() > MAX_USERNAME_BYTES || canonical.chars().any(char::is_control) {
        return Err(AccountError::InvalidUsername);
    }
    Ok(canonical)
}

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }

    pub fn set(&self, secs: u64) {
        self.0.store(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetState {
    pub h_temp: GroupElement,
    pub expires_at: u64,
    pub consumed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRecord {
    pub username: String,
    pub p_pi: UserKeyParams,
    pub h: GroupElement,
    pub reset: Option<ResetState>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl AccountRecord {
    pub fn verifier(&self) -> Verifier {
        Verifier { username: self.username.clone(), p_pi: self.p_pi, h: self.h.clone(), kind: VerifierKind::Password }
    }
}

/// The temporary authentication key handed to the user out of band.
pub struct ResetToken(Scalar);

impl ResetToken {
    pub fn scalar(&self) -> &Scalar {
        &self.0
    }

    pub fn to_hex(&self, group: &GroupParams) -> String {
        hex::encode(group.encode_scalar(&self.0))
    }

    pub fn from_hex(group: &GroupParams, text: &str) -> Option<ResetToken> {
        let bytes = hex::decode(text.trim()).ok()?;
        let scalar = group.decode_scalar(&bytes).ok()?;
        (!scalar.is_zero()).then_some(ResetToken(scalar))
    }
}

/// Inputs for fabricating indistinguishable challenges for unknown users.
#[derive(Clone)]
pub struct DecoyConfig {
    pub secret: [u8; 32],
    /// Algorithm and costs copied into decoy parameters; the salt is replaced.
    pub template: KdfParams,
}

impl DecoyConfig {
    fn salt(&self, label: &str, username: &str) -> [u8; SALT_LEN] {
        labeled_hash(label, &[&self.secret, username.as_bytes()])[..SALT_LEN].try_into().unwrap()
    }

    fn params(&self, username: &str) -> UserKeyParams {
        let base = KdfParams { salt: self.salt("AS-decoy-salt", username), ..self.template };
        UserKeyParams::new(base, self.salt("AS-decoy-user-salt", username))
    }

    fn element(&self, group: &GroupParams, label: &str, username: &str) -> GroupElement {
        group.exp_gen(&group.hash_to_nonzero_scalar(label, &[&self.secret, username.as_bytes()]))
    }
}

pub struct AccountStore {
    group: Arc<GroupParams>,
    path: Option<PathBuf>,
    accounts: RwLock<HashMap<String, Arc<Mutex<AccountRecord>>>>,
    file_lock: Mutex<()>,
    clock: Arc<dyn Clock>,
    decoy: DecoyConfig,
}

impl AccountStore {
    pub fn in_memory(group: Arc<GroupParams>, clock: Arc<dyn Clock>, decoy: DecoyConfig) -> Self {
        AccountStore {
            group,
            path: None,
            accounts: RwLock::new(HashMap::new()),
            file_lock: Mutex::new(()),
            clock,
            decoy,
        }
    }

    /// Loads `path`, creating an empty database if it does not exist.
    pub fn open(path: &Path, group: Arc<GroupParams>, clock: Arc<dyn Clock>, decoy: DecoyConfig) -> Result<Self, AccountError> {
        let records = match fs::read(path) {
            Ok(bytes) => decode_db(&group, &bytes)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                write_atomic(path, &encode_db(&group, &[]))?;
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        let store = AccountStore { path: Some(path.to_path_buf()), ..Self::in_memory(group, clock, decoy) };
        {
            let mut map = store.accounts.write();
            for record in records {
                map.insert(record.username.clone(), Arc::new(Mutex::new(record)));
            }
        }
        Ok(store)
    }

    pub fn group(&self) -> &Arc<GroupParams> {
        &self.group
    }

    pub fn len(&self) -> usize {
        self.accounts.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, username: &str) -> Option<AccountRecord> {
        let username = canonicalize_username(username).ok()?;
        let entry = self.accounts.read().get(&username).cloned()?;
        let record = entry.lock().clone();
        Some(record)
    }

    pub fn register(&self, username: &str, p_pi: UserKeyParams, h: &[u8]) -> Result<AccountRecord, AccountError> {
        let username = canonicalize_username(username)?;
        let h = self.group.validate_element(h).map_err(|_| AccountError::InvalidVerifier)?;
        if h == self.group.identity() {
            return Err(AccountError::InvalidVerifier);
        }
        p_pi.base.validate().map_err(|_| AccountError::InvalidVerifier)?;
        let now = self.clock.now();
        let record = AccountRecord { username: username.clone(), p_pi, h, reset: None, created_at: now, updated_at: now };

        let _file = self.file_lock.lock();
        let mut map = self.accounts.write();
        if map.contains_key(&username) {
            return Err(AccountError::UserExists);
        }
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new().append(true).open(path)?;
            file.write_all(&encode_record(&self.group, &record))?;
            file.sync_data()?;
        }
        map.insert(username, Arc::new(Mutex::new(record.clone())));
        Ok(record)
    }

    /// The password verifier, or a decoy when the user does not exist.
    pub fn verifier(&self, username: &str) -> Verifier {
        match self.get(username) {
            Some(record) => record.verifier(),
            None => self.decoy_verifier(username),
        }
    }

    /// The live reset verifier, or a decoy when there is none.
    pub fn reset_verifier(&self, username: &str) -> Verifier {
        let now = self.clock.now();
        match self.get(username) {
            Some(record) => match &record.reset {
                Some(reset) if !reset.consumed && now < reset.expires_at => Verifier {
                    username: record.username.clone(),
                    p_pi: record.p_pi,
                    h: reset.h_temp.clone(),
                    kind: VerifierKind::ResetToken,
                },
                _ => Verifier {
                    username: record.username.clone(),
                    p_pi: record.p_pi,
                    h: self.decoy.element(&self.group, "AS-decoy-reset-pi", &record.username),
                    kind: VerifierKind::Decoy,
                },
            },
            None => self.decoy_verifier(username),
        }
    }

    fn decoy_verifier(&self, username: &str) -> Verifier {
        let username = canonicalize_username(username).unwrap_or_default();
        Verifier {
            p_pi: self.decoy.params(&username),
            h: self.decoy.element(&self.group, "AS-decoy-pi", &username),
            kind: VerifierKind::Decoy,
            username,
        }
    }

    /// Marks the reset verifier `h_temp` consumed. Returns false if it was
    /// already consumed, expired or replaced, in which case the
    /// authentication that used it must be rejected.
    pub fn consume_reset(&self, username: &str, h_temp: &GroupElement) -> Result<bool, AccountError> {
        let Some(entry) = self.entry(username) else {
            return Ok(false);
        };
        let now = self.clock.now();
        {
            let mut record = entry.lock();
            match record.reset.as_mut() {
                Some(reset) if !reset.consumed && now < reset.expires_at && &reset.h_temp == h_temp => {
                    reset.consumed = true;
                    record.updated_at = now;
                }
                _ => return Ok(false),
            }
        }
        self.persist()?;
        Ok(true)
    }

    /// Replaces `(P_pi, h)`. The previous pair is dropped from memory and from
    /// the file. Any reset state is cleared.
    pub fn change_credentials(&self, grant: &AuthGrant, username: &str, p_pi: UserKeyParams, h: &[u8]) -> Result<(), AccountError> {
        let username = canonicalize_username(username)?;
        if grant.username() != username {
            return Err(AccountError::NotAuthenticated);
        }
        let h = self.group.validate_element(h).map_err(|_| AccountError::InvalidVerifier)?;
        if h == self.group.identity() {
            return Err(AccountError::InvalidVerifier);
        }
        p_pi.base.validate().map_err(|_| AccountError::InvalidVerifier)?;
        let entry = self.entry(&username).ok_or(AccountError::UnknownUser)?;
        {
            let mut record = entry.lock();
            record.p_pi = p_pi;
            record.h = h;
            record.reset = None;
            record.updated_at = self.clock.now().max(record.updated_at + 1);
        }
        self.persist()
    }

    /// Issues a fresh one-time reset key, replacing any earlier one.
    pub fn begin_reset<R: RngCore + CryptoRng>(&self, username: &str, rng: &mut R) -> Result<ResetToken, AccountError> {
        let entry = self.entry(username).ok_or(AccountError::UnknownUser)?;
        let token = self.group.random_scalar(rng);
        let now = self.clock.now();
        {
            let mut record = entry.lock();
            record.reset = Some(ResetState {
                h_temp: self.group.exp_gen(&token),
                expires_at: now + RESET_LIFETIME_SECS,
                consumed: false,
            });
            record.updated_at = now;
        }
        self.persist()?;
        Ok(ResetToken(token))
    }

    fn entry(&self, username: &str) -> Option<Arc<Mutex<AccountRecord>>> {
        let username = canonicalize_username(username).ok()?;
        self.accounts.read().get(&username).cloned()
    }

    /// Every record, sorted by username.
    pub fn records(&self) -> Vec<AccountRecord> {
        let entries: Vec<_> = self.accounts.read().values().cloned().collect();
        let mut records: Vec<AccountRecord> = entries.iter().map(|e| e.lock().clone()).collect();
        records.sort_by(|a, b| a.username.cmp(&b.username));
        records
    }

    fn persist(&self) -> Result<(), AccountError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let _file = self.file_lock.lock();
        write_atomic(path, &encode_db(&self.group, &self.records()))?;
        Ok(())
    }
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

pub fn encode_record(group: &GroupParams, record: &AccountRecord) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(record.username.len() as u16).to_be_bytes());
    out.extend_from_slice(record.username.as_bytes());
    out.extend_from_slice(&record.p_pi.base.encode());
    out.extend_from_slice(&record.p_pi.user_salt);
    out.extend_from_slice(&group.encode(&record.h));
    match &record.reset {
        None => out.push(0),
        Some(reset) => {
            out.push(1);
            out.extend_from_slice(&group.encode(&reset.h_temp));
            out.extend_from_slice(&reset.expires_at.to_be_bytes());
            out.push(reset.consumed as u8);
        }
    }
    out.extend_from_slice(&record.created_at.to_be_bytes());
    out.extend_from_slice(&record.updated_at.to_be_bytes());
    let checksum = Sha256::digest(&out);
    out.extend_from_slice(&checksum[..CHECKSUM_LEN]);
    out
}

pub fn encode_db(group: &GroupParams, records: &[AccountRecord]) -> Vec<u8> {
    let mut out = DB_MAGIC.to_vec();
    out.push(DB_VERSION);
    for record in records {
        out.extend_from_slice(&encode_record(group, record));
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AccountError> {
        if self.bytes.len() - self.pos < n {
            return Err(AccountError::CorruptStore("truncated record".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, AccountError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn corrupt(msg: &str) -> AccountError {
    AccountError::CorruptStore(msg.to_string())
}

pub fn decode_db(group: &GroupParams, bytes: &[u8]) -> Result<Vec<AccountRecord>, AccountError> {
    if bytes.len() < 5 || &bytes[..4] != DB_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if bytes[4] != DB_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let mut cur = Cursor { bytes, pos: 5 };
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let elem_len = group.encoded_len();
    while cur.pos < bytes.len() {
        let start = cur.pos;
        let name_len = u16::from_be_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let username = std::str::from_utf8(cur.take(name_len)?).map_err(|_| corrupt("username not UTF-8"))?.to_string();
        let base = KdfParams::decode(cur.take(KDF_PARAMS_LEN)?).map_err(|_| corrupt("bad KDF parameters"))?;
        let user_salt: [u8; SALT_LEN] = cur.take(SALT_LEN)?.try_into().unwrap();
        let h = group.validate_element(cur.take(elem_len)?).map_err(|_| corrupt("bad verifier"))?;
        let reset = match cur.take(1)?[0] {
            0 => None,
            1 => Some(ResetState {
                h_temp: group.validate_element(cur.take(elem_len)?).map_err(|_| corrupt("bad reset verifier"))?,
                expires_at: cur.u64()?,
                consumed: match cur.take(1)?[0] {
                    0 => false,
                    1 => true,
                    _ => return Err(corrupt("bad consumed flag")),
                },
            }),
            _ => return Err(corrupt("bad reset flag")),
        };
        let created_at = cur.u64()?;
        let updated_at = cur.u64()?;
        let body_end = cur.pos;
        let checksum = cur.take(CHECKSUM_LEN)?;
        if Sha256::digest(&bytes[start..body_end])[..CHECKSUM_LEN] != *checksum {
            return Err(corrupt("checksum mismatch"));
        }
        if canonicalize_username(&username).ok().as_deref() != Some(username.as_str()) || !seen.insert(username.clone()) {
            return Err(corrupt("bad or duplicate username"));
        }
        records.push(AccountRecord {
            username,
            p_pi: UserKeyParams::new(base, user_salt),
            h,
            reset,
            created_at,
            updated_at,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn decoy() -> DecoyConfig {
        DecoyConfig { secret: [5; 32], template: KdfParams::test_iterated([0; 16], 1).unwrap() }
    }

    fn params(seed: u8) -> UserKeyParams {
        UserKeyParams::new(KdfParams::test_iterated([seed; 16], 1).unwrap(), [seed; 16])
    }

    fn toy_store() -> AccountStore {
        AccountStore::in_memory(GroupProfile::Toy.params(), Arc::new(ManualClock::new(1000)), decoy())
    }

    #[test]
    fn canonicalization() {
        assert_eq!(canonicalize_username("Alice").unwrap(), "alice");
        assert_eq!(canonicalize_username("ÅSA").unwrap(), canonicalize_username("a\u{30a}sa").unwrap());
        assert!(canonicalize_username("").is_err());
        assert!(canonicalize_username("a\nb").is_err());
        assert!(canonicalize_username(&"x".repeat(65)).is_err());
        assert!(canonicalize_username(&"x".repeat(64)).is_ok());
    }

    #[test]
    fn register_and_fetch() {
        let store = toy_store();
        let rec = store.register("alice", params(1), &[18]).unwrap();
        assert_eq!(store.get("alice").unwrap(), rec);
        assert_eq!(store.get("ALICE").unwrap().h, rec.h);
        assert!(matches!(store.register("Alice", params(2), &[18]), Err(AccountError::UserExists)));
        assert!(matches!(store.register("bob", params(2), &[5]), Err(AccountError::InvalidVerifier)));
        assert!(matches!(store.register("bob", params(2), &[1]), Err(AccountError::InvalidVerifier)));
        assert!(matches!(store.register("", params(2), &[18]), Err(AccountError::InvalidUsername)));
    }

    #[test]
    fn decoy_is_stable_and_shaped_like_a_record() {
        let store = AccountStore::in_memory(GroupProfile::Test256.params(), Arc::new(SystemClock), decoy());
        let a = store.verifier("mallory");
        let b = store.verifier("Mallory");
        assert_eq!(a.kind, VerifierKind::Decoy);
        assert_eq!(a.h, b.h);
        assert_eq!(a.p_pi, b.p_pi);
        assert_ne!(a.p_pi, store.verifier("trent").p_pi);
    }

    #[test]
    fn reset_lifecycle() {
        let clock = Arc::new(ManualClock::new(1000));
        let store = AccountStore::in_memory(GroupProfile::Toy.params(), clock.clone(), decoy());
        store.register("alice", params(1), &[18]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(store.begin_reset("nobody", &mut rng), Err(AccountError::UnknownUser)));

        let token = store.begin_reset("alice", &mut rng).unwrap();
        let v = store.reset_verifier("alice");
        assert_eq!(v.kind, VerifierKind::ResetToken);
        assert_eq!(v.h, store.group().exp_gen(token.scalar()));
        assert!(store.consume_reset("alice", &v.h).unwrap());
        assert!(!store.consume_reset("alice", &v.h).unwrap());
        assert_eq!(store.reset_verifier("alice").kind, VerifierKind::Decoy);

        store.begin_reset("alice", &mut rng).unwrap();
        clock.advance(RESET_LIFETIME_SECS);
        let expired = store.reset_verifier("alice");
        assert_eq!(expired.kind, VerifierKind::Decoy);
        assert!(!store.consume_reset("alice", &store.get("alice").unwrap().reset.unwrap().h_temp).unwrap());
    }

    #[test]
    fn token_hex_round_trip() {
        let g = GroupProfile::Test256.params();
        let store = AccountStore::in_memory(g.clone(), Arc::new(SystemClock), decoy());
        store.register("alice", params(1), &g.encode(&g.generator())).unwrap();
        let token = store.begin_reset("alice", &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let hex = token.to_hex(&g);
        assert_eq!(hex.len(), 64);
        assert_eq!(ResetToken::from_hex(&g, &hex).unwrap().scalar(), token.scalar());
        assert!(ResetToken::from_hex(&g, "zz").is_none());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("accounts.db");
        let g = GroupProfile::Toy.params();
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(7));
        {
            let store = AccountStore::open(&path, g.clone(), clock.clone(), decoy()).unwrap();
            store.register("alice", params(1), &[18]).unwrap();
            store.register("bob", params(2), &[16]).unwrap();
            store.begin_reset("bob", &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        }
        let store = AccountStore::open(&path, g.clone(), clock.clone(), decoy()).unwrap();
        assert_eq!(store.len(), 2);
        assert!(store.get("bob").unwrap().reset.is_some());

        let bytes = fs::read(&path).unwrap();
        assert_eq!(encode_db(&g, &store.records()), bytes);
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(AccountStore::open(&path, g.clone(), clock.clone(), decoy()), Err(AccountError::CorruptStore(_))));
        let mut flipped = bytes.clone();
        flipped[8] ^= 0x20;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(AccountStore::open(&path, g, clock, decoy()), Err(AccountError::CorruptStore(_))));
    }
}
