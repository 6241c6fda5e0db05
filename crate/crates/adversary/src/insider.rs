//! A provider that keeps its per-session secrets, modelling an insider.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use authstore_core::account::{AccountStore, DecoyConfig, SystemClock};
use authstore_core::group::GroupParams;
use authstore_core::pake::ServerSession;
use authstore_core::stretch::KdfParams;
use authstore_core::wire::{ErrorCode, FramedStream, Message};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::transcript::ServerView;

/// One handshake as the insider recorded it.
#[derive(Clone)]
pub struct InsiderSession {
    pub username: String,
    pub view: ServerView,
    pub accepted: bool,
}

/// Speaks the provider side of registration and the handshake, one
/// connection at a time, and reports `(x, c, h)` for every session.
pub struct InsiderServer {
    addr: SocketAddr,
    store: Arc<AccountStore>,
    sessions: Receiver<InsiderSession>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl InsiderServer {
    pub fn spawn(group: Arc<GroupParams>, provider_id: &str, seed: u64) -> io::Result<InsiderServer> {
        let decoy = DecoyConfig {
            secret: [0x5a; 32],
            template: KdfParams::test_iterated([0; 16], 1).expect("valid decoy parameters"),
        };
        let store = Arc::new(AccountStore::in_memory(group.clone(), Arc::new(SystemClock), decoy));
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, sessions) = mpsc::channel();
        let thread = {
            let (store, stop, provider) = (store.clone(), stop.clone(), provider_id.to_owned());
            thread::spawn(move || {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    if let Some(s) = serve(&group, &provider, &store, conn, &mut rng) {
                        if tx.send(s).is_err() {
                            break;
                        }
                    }
                }
            })
        };
        Ok(InsiderServer { addr, store, sessions, stop, thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn accounts(&self) -> &AccountStore {
        &self.store
    }

    /// The next finished handshake.
    pub fn next_session(&self, timeout: Duration) -> Option<InsiderSession> {
        self.sessions.recv_timeout(timeout).ok()
    }
}

impl Drop for InsiderServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(
    group: &Arc<GroupParams>,
    provider: &str,
    store: &AccountStore,
    conn: TcpStream,
    rng: &mut ChaCha20Rng,
) -> Option<InsiderSession> {
    let _ = conn.set_read_timeout(Some(Duration::from_secs(30)));
    let mut framed = FramedStream::new(conn);
    loop {
        match framed.recv().ok()? {
            Message::Register(req) => {
                let reply = match store.register(&req.username, req.p_pi, &req.h) {
                    Ok(_) => Message::RegisterOk,
                    Err(_) => Message::ErrorReply(ErrorCode::UserExists),
                };
                framed.send(&reply).ok()?;
            }
            Message::AuthRequest(m1) => {
                let verifier = store.verifier(&m1.username);
                let x = group.random_scalar(rng);
                let c = group.random_scalar(rng);
                let view = ServerView { x: x.clone(), c: c.clone(), h: verifier.h.clone() };
                let (m2, mut session) =
                    ServerSession::start_with_ephemerals(group.clone(), provider, &m1, &verifier, x, c).ok()?;
                framed.send(&Message::AuthChallenge(m2)).ok()?;
                let accepted = match framed.recv() {
                    Ok(Message::AuthResponse(m3)) => match session.on_response(&m3) {
                        Ok(m4) => framed.send(&Message::AuthConfirm(m4)).is_ok(),
                        Err(_) => false,
                    },
                    _ => false,
                };
                return Some(InsiderSession { username: verifier.username, view, accepted });
            }
            _ => return None,
        }
    }
}
