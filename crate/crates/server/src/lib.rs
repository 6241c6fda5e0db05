//! The service provider: accounts, the handshake driver, sealed channel
//! dispatch and per-user blob storage.
//!
//! Each connection runs in its own thread. Before authentication it accepts
//! `Register`, `AuthRequest` and `ResetAuthRequest`. A failed handshake
//! closes the connection without a reply. After M4 every frame is a
//! `Channel` frame keyed by the session.
//!
//! Reset tokens are issued only on the loopback admin socket or through
//! [`ServerHandle::issue_reset`].

pub mod blobs;
pub mod config;
pub mod limiter;

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use authstore_core::account::{canonicalize_username, AccountError, AccountStore, DecoyConfig, SystemClock};
use authstore_core::group::GroupParams;
use authstore_core::pake::{channel_keys, AuthGrant, AuthRequest, ServerSession, VerifierKind};
use authstore_core::wire::{
    ChannelOpener, ChannelSealer, Direction, ErrorCode, FrameLog, FramedStream, Message, RegisterRequest,
};
use parking_lot::Mutex;
use rand::rngs::OsRng;
use thiserror::Error;

use blobs::{BlobError, BlobStore};
pub use config::ServerConfig;
use limiter::RateLimiter;

/// Live connection threads and a handle to close each socket.
type Connections = Arc<Mutex<Vec<(JoinHandle<()>, TcpStream)>>>;

const IDLE_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Shared {
    group: Arc<GroupParams>,
    provider_id: String,
    store: AccountStore,
    blobs: BlobStore,
    limiter: RateLimiter,
    wire_log: Option<Mutex<File>>,
    shutting_down: AtomicBool,
}

impl Shared {
    fn flush_log(&self, log: &FrameLog) {
        let Some(file) = &self.wire_log else { return };
        let mut file = file.lock();
        for (dir, frame) in log.frames() {
            let tag = match dir {
                Direction::Sent => "S",
                Direction::Received => "C",
            };
            let _ = writeln!(file, "{tag} {}", hex::encode(&frame));
        }
        let _ = file.flush();
    }
}

pub struct Server {
    listener: TcpListener,
    admin: Option<TcpListener>,
    shared: Arc<Shared>,
    drain_timeout: Duration,
}

impl Server {
    /// Loads or initialises the data directory and binds the sockets.
    pub fn bind(config: ServerConfig) -> Result<Server, ServerError> {
        if let Some(admin) = config.admin_listen {
            if !admin.ip().is_loopback() {
                return Err(ServerError::Config("admin socket must bind a loopback address".into()));
            }
        }
        let state = config::load_or_init(&config)?;
        let group = state.profile.params();
        let decoy = DecoyConfig { secret: state.decoy_secret, template: state.decoy_kdf };
        let store = AccountStore::open(&config::accounts_path(&config.data_dir), group.clone(), Arc::new(SystemClock), decoy)?;
        let blobs = BlobStore::open(config.data_dir.join(config::BLOB_DIR))?;
        let wire_log = match &config.wire_log {
            Some(path) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)),
            None => None,
        };
        let listener = TcpListener::bind(config.listen)?;
        let admin = config.admin_listen.map(TcpListener::bind).transpose()?;
        Ok(Server {
            listener,
            admin,
            shared: Arc::new(Shared {
                group,
                provider_id: state.provider_id,
                store,
                blobs,
                limiter: RateLimiter::new(config.rate_limit, config.rate_window),
                wire_log,
                shutting_down: AtomicBool::new(false),
            }),
            drain_timeout: config.drain_timeout,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    pub fn admin_addr(&self) -> Option<SocketAddr> {
        self.admin.as_ref().map(|l| l.local_addr().expect("bound listener"))
    }

    /// Starts the accept loops on background threads.
    pub fn spawn(self) -> ServerHandle {
        let addr = self.local_addr();
        let admin_addr = self.admin_addr();
        let connections: Connections = Arc::default();

        let shared = self.shared.clone();
        let conns = connections.clone();
        let listener = self.listener;
        let accept = thread::spawn(move || {
            for stream in listener.incoming() {
                if shared.shutting_down.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let Ok(registry_copy) = stream.try_clone() else { continue };
                let shared = shared.clone();
                let handle = thread::spawn(move || handle_connection(&shared, stream));
                let mut conns = conns.lock();
                conns.retain(|(h, _)| !h.is_finished());
                conns.push((handle, registry_copy));
            }
        });

        let admin = self.admin.map(|listener| {
            let shared = self.shared.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if shared.shutting_down.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = stream {
                        handle_admin(&shared, stream);
                    }
                }
            })
        });

        ServerHandle {
            addr,
            admin_addr,
            shared: self.shared,
            accept: Some(accept),
            admin,
            connections,
            drain_timeout: self.drain_timeout,
        }
    }
}

/// A running server. Dropping it shuts the server down.
pub struct ServerHandle {
    addr: SocketAddr,
    admin_addr: Option<SocketAddr>,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
    admin: Option<JoinHandle<()>>,
    connections: Connections,
    drain_timeout: Duration,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn admin_addr(&self) -> Option<SocketAddr> {
        self.admin_addr
    }

    pub fn group(&self) -> Arc<GroupParams> {
        self.shared.group.clone()
    }

    pub fn provider_id(&self) -> &str {
        &self.shared.provider_id
    }

    pub fn accounts(&self) -> &AccountStore {
        &self.shared.store
    }

    /// Issues a reset token and returns it as hex, for the operator only.
    pub fn issue_reset(&self, username: &str) -> Result<String, AccountError> {
        issue_reset(&self.shared, username)
    }

    /// Stops accepting, lets open connections finish for up to the drain
    /// timeout, then closes whatever remains.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.shutting_down.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept calls
        let _ = TcpStream::connect(self.addr);
        if let Some(a) = self.admin_addr {
            let _ = TcpStream::connect(a);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        if let Some(h) = self.admin.take() {
            let _ = h.join();
        }
        let deadline = Instant::now() + self.drain_timeout;
        let conns = std::mem::take(&mut *self.connections.lock());
        while Instant::now() < deadline && conns.iter().any(|(h, _)| !h.is_finished()) {
            thread::sleep(Duration::from_millis(10));
        }
        for (handle, stream) in conns {
            if !handle.is_finished() {
                let _ = stream.shutdown(Shutdown::Both);
            }
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn issue_reset(shared: &Shared, username: &str) -> Result<String, AccountError> {
    let token = shared.store.begin_reset(username, &mut OsRng)?;
    Ok(token.to_hex(&shared.group))
}

fn handle_admin(shared: &Shared, stream: TcpStream) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    let mut framed = FramedStream::new(stream);
    let reply = match framed.recv() {
        Ok(Message::ResetBegin { username }) => match issue_reset(shared, &username) {
            Ok(token) => Message::ResetToken { token },
            Err(AccountError::UnknownUser | AccountError::InvalidUsername) => Message::ErrorReply(ErrorCode::UnknownUser),
            Err(_) => Message::ErrorReply(ErrorCode::Internal),
        },
        Ok(_) => Message::ErrorReply(ErrorCode::Protocol),
        Err(_) => return,
    };
    let _ = framed.send(&reply);
}

fn handle_connection(shared: &Shared, stream: TcpStream) {
    let _ = stream.set_read_timeout(Some(IDLE_TIMEOUT));
    let _ = stream.set_nodelay(true);
    let log = FrameLog::new();
    let mut framed = if shared.wire_log.is_some() {
        FramedStream::with_log(stream, log.clone())
    } else {
        FramedStream::new(stream)
    };
    let _ = drive(shared, &mut framed);
    let _ = framed.get_ref().shutdown(Shutdown::Both);
    shared.flush_log(&log);
}

enum Outcome {
    Continue,
    Close,
    Established(AuthGrant, authstore_core::pake::SessionKey),
}

fn drive(shared: &Shared, framed: &mut FramedStream<TcpStream>) -> Result<(), authstore_core::wire::TransportError> {
    loop {
        if shared.shutting_down.load(Ordering::SeqCst) {
            return Ok(());
        }
        let outcome = match framed.recv()? {
            Message::Register(req) => {
                framed.send(&register(shared, req))?;
                Outcome::Continue
            }
            Message::AuthRequest(m1) => authenticate(shared, framed, m1, false)?,
            Message::ResetAuthRequest(m1) => authenticate(shared, framed, m1, true)?,
            Message::ResetBegin { .. } => {
                framed.send(&Message::ErrorReply(ErrorCode::NotPermitted))?;
                Outcome::Continue
            }
            _ => {
                framed.send(&Message::ErrorReply(ErrorCode::Protocol))?;
                Outcome::Close
            }
        };
        match outcome {
            Outcome::Continue => {}
            Outcome::Close => return Ok(()),
            Outcome::Established(grant, sk) => return channel(shared, framed, grant, sk),
        }
    }
}

fn register(shared: &Shared, req: RegisterRequest) -> Message {
    match shared.store.register(&req.username, req.p_pi, &req.h) {
        Ok(_) => Message::RegisterOk,
        Err(AccountError::UserExists) => Message::ErrorReply(ErrorCode::UserExists),
        Err(AccountError::InvalidUsername) => Message::ErrorReply(ErrorCode::InvalidUsername),
        Err(AccountError::InvalidVerifier) => Message::ErrorReply(ErrorCode::InvalidVerifier),
        Err(_) => Message::ErrorReply(ErrorCode::Internal),
    }
}

fn authenticate(
    shared: &Shared,
    framed: &mut FramedStream<TcpStream>,
    m1: AuthRequest,
    reset: bool,
) -> Result<Outcome, authstore_core::wire::TransportError> {
    let Ok(username) = canonicalize_username(&m1.username) else {
        framed.send(&Message::ErrorReply(ErrorCode::InvalidUsername))?;
        return Ok(Outcome::Continue);
    };
    if shared.limiter.is_limited(&username) {
        framed.send(&Message::ErrorReply(ErrorCode::RateLimited))?;
        return Ok(Outcome::Continue);
    }
    let verifier = if reset { shared.store.reset_verifier(&username) } else { shared.store.verifier(&username) };
    let h_temp = verifier.h.clone();
    let Ok((m2, mut session)) = ServerSession::start(shared.group.clone(), &shared.provider_id, &m1, &verifier, &mut OsRng)
    else {
        framed.send(&Message::ErrorReply(ErrorCode::InvalidUsername))?;
        return Ok(Outcome::Continue);
    };
    framed.send(&Message::AuthChallenge(m2))?;
    let m3 = match framed.recv()? {
        Message::AuthResponse(m3) => m3,
        _ => return Ok(Outcome::Close),
    };
    let m4 = match session.on_response(&m3) {
        Ok(m4) => m4,
        Err(_) => {
            shared.limiter.record_failure(&username);
            return Ok(Outcome::Close);
        }
    };
    if session.verifier_kind() == VerifierKind::ResetToken && !shared.store.consume_reset(&username, &h_temp).unwrap_or(false) {
        shared.limiter.record_failure(&username);
        return Ok(Outcome::Close);
    }
    let (Some(grant), Some(sk)) = (session.grant(), session.session_key().cloned()) else {
        return Ok(Outcome::Close);
    };
    framed.send(&Message::AuthConfirm(m4))?;
    Ok(Outcome::Established(grant, sk))
}

fn channel(
    shared: &Shared,
    framed: &mut FramedStream<TcpStream>,
    grant: AuthGrant,
    sk: authstore_core::pake::SessionKey,
) -> Result<(), authstore_core::wire::TransportError> {
    let keys = channel_keys(&sk);
    drop(sk);
    let mut opener = ChannelOpener::new(keys.client_to_server);
    let mut sealer = ChannelSealer::new(keys.server_to_client);
    drop(keys);
    let username = grant.username().to_owned();
    // a reset grant may only replace the credentials
    let mut must_change = grant.via_reset();
    loop {
        let frame = match framed.recv()? {
            Message::Channel(f) => f,
            _ => return Ok(()),
        };
        let Ok(inner) = opener.open(&frame) else {
            return Ok(());
        };
        let reply = match inner {
            Message::ChangeCredentials { p_pi, h } => {
                match shared.store.change_credentials(&grant, &username, p_pi, &h) {
                    Ok(()) => {
                        must_change = false;
                        Message::Ok
                    }
                    Err(AccountError::InvalidVerifier) => Message::ErrorReply(ErrorCode::InvalidVerifier),
                    Err(_) => Message::ErrorReply(ErrorCode::Internal),
                }
            }
            Message::GetBlob | Message::PutBlob { .. } if must_change => Message::ErrorReply(ErrorCode::NotPermitted),
            Message::GetBlob => {
                let (version, blob) = shared.blobs.get(&username);
                Message::BlobData { version, blob }
            }
            Message::PutBlob { version, blob } => match shared.blobs.put(&username, version, blob) {
                Ok(()) => Message::Ok,
                Err(BlobError::VersionConflict { .. }) => Message::ErrorReply(ErrorCode::VersionConflict),
                Err(_) => Message::ErrorReply(ErrorCode::Internal),
            },
            _ => Message::ErrorReply(ErrorCode::Protocol),
        };
        framed.send(&sealer.seal(&reply))?;
    }
}

/// Asks the admin socket at `addr` for a reset token.
pub fn request_reset_token(addr: SocketAddr, username: &str) -> Result<String, ServerError> {
    let mut framed = FramedStream::new(TcpStream::connect(addr)?);
    framed
        .send(&Message::ResetBegin { username: username.to_owned() })
        .map_err(|e| ServerError::Config(e.to_string()))?;
    match framed.recv().map_err(|e| ServerError::Config(e.to_string()))? {
        Message::ResetToken { token } => Ok(token),
        Message::ErrorReply(ErrorCode::UnknownUser) => Err(AccountError::UnknownUser.into()),
        other => Err(ServerError::Config(format!("unexpected admin reply 0x{:02x}", other.type_byte()))),
    }
}
