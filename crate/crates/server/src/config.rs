use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use authstore_core::account::write_atomic;
use authstore_core::group::GroupProfile;
use authstore_core::stretch::KdfParams;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::ServerError;

pub const DATA_DIR_ENV: &str = "AUTHSTORE_DATA_DIR";
pub const STATE_FILE: &str = "server.json";
pub const ACCOUNTS_FILE: &str = "accounts.db";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Loopback address for reset issuance; `None` disables the socket.
    pub admin_listen: Option<SocketAddr>,
    pub data_dir: PathBuf,
    pub profile: GroupProfile,
    pub provider_id: String,
    /// Failed authentications per username tolerated within `rate_window`.
    pub rate_limit: u32,
    pub rate_window: Duration,
    /// Cost template copied into decoy parameters for unknown users.
    pub decoy_kdf: KdfParams,
    /// Every frame in and out is appended here as hex, one per line.
    pub wire_log: Option<PathBuf>,
    /// How long shutdown waits for open connections before cutting them.
    pub drain_timeout: Duration,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            admin_listen: None,
            data_dir: data_dir.into(),
            profile: GroupProfile::Modp2048,
            provider_id: "authstore".into(),
            rate_limit: 5,
            rate_window: Duration::from_secs(60),
            decoy_kdf: KdfParams::memory_hard(
                [0; 16],
                authstore_core::stretch::DEFAULT_MEM_KIB,
                authstore_core::stretch::DEFAULT_PASSES,
                authstore_core::stretch::DEFAULT_PARALLELISM,
            )
            .expect("default costs are valid"),
            wire_log: None,
            drain_timeout: Duration::from_secs(5),
        }
    }

    /// Replaces `data_dir` with `$AUTHSTORE_DATA_DIR` when set.
    pub fn apply_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
            self.data_dir = PathBuf::from(dir);
        }
        self
    }
}

/// Values fixed for the lifetime of a data directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistentState {
    pub profile: String,
    pub provider_id: String,
    pub decoy_secret: String,
    pub decoy_kdf: String,
}

pub struct LoadedState {
    pub profile: GroupProfile,
    pub provider_id: String,
    pub decoy_secret: [u8; 32],
    pub decoy_kdf: KdfParams,
}

fn bad(msg: impl Into<String>) -> ServerError {
    ServerError::Config(msg.into())
}

/// Reads `server.json`, or creates it from `config` with a fresh decoy secret.
pub fn load_or_init(config: &ServerConfig) -> Result<LoadedState, ServerError> {
    fs::create_dir_all(config.data_dir.join(BLOB_DIR))?;
    let path = config.data_dir.join(STATE_FILE);
    match fs::read(&path) {
        Ok(bytes) => {
            let state: PersistentState = serde_json::from_slice(&bytes).map_err(|e| bad(format!("{}: {e}", path.display())))?;
            let profile: GroupProfile = state.profile.parse().map_err(|_| bad("unknown group profile in server.json"))?;
            if profile != config.profile {
                return Err(bad(format!(
                    "data directory uses group {}, configured {}",
                    profile.name(),
                    config.profile.name()
                )));
            }
            let decoy_secret = hex::decode(&state.decoy_secret)
                .ok()
                .and_then(|b| <[u8; 32]>::try_from(b).ok())
                .ok_or_else(|| bad("bad decoy secret"))?;
            let decoy_kdf = hex::decode(&state.decoy_kdf)
                .ok()
                .and_then(|b| KdfParams::decode(&b).ok())
                .ok_or_else(|| bad("bad decoy parameters"))?;
            Ok(LoadedState { profile, provider_id: state.provider_id, decoy_secret, decoy_kdf })
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let mut decoy_secret = [0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut decoy_secret);
            let state = PersistentState {
                profile: config.profile.name().to_owned(),
                provider_id: config.provider_id.clone(),
                decoy_secret: hex::encode(decoy_secret),
                decoy_kdf: hex::encode(config.decoy_kdf.encode()),
            };
            write_atomic(&path, serde_json::to_string_pretty(&state).expect("plain struct").as_bytes())?;
            Ok(LoadedState {
                profile: config.profile,
                provider_id: config.provider_id.clone(),
                decoy_secret,
                decoy_kdf: config.decoy_kdf,
            })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn accounts_path(data_dir: &Path) -> PathBuf {
    data_dir.join(ACCOUNTS_FILE)
}
