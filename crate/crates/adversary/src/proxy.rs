//! A frame-level man-in-the-middle between a client and a provider.

use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use authstore_core::stretch::KdfAlgorithm;
use authstore_core::wire::{self, msg_type, Message};

use crate::transcript::{Flow, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperRule {
    /// Forward everything unchanged.
    None,
    /// Rewrite the cost fields of `P_pi` in M2. Iterated-hash parameters
    /// have no memory cost, so only the time cost changes for them.
    WeakenParams { new_time_cost: u32, new_mem_cost: u32 },
    /// XOR `0x01` into body byte `offset` of frame `message_index`,
    /// counting frames in both directions from zero.
    FlipByte { message_index: usize, offset: usize },
}

impl TamperRule {
    /// The frame to deliver, and whether it differs from `frame`.
    pub fn apply(&self, index: usize, flow: Flow, frame: Vec<u8>) -> (Vec<u8>, bool) {
        match *self {
            TamperRule::None => (frame, false),
            TamperRule::WeakenParams { new_time_cost, new_mem_cost } => {
                if flow != Flow::ServerToClient || frame.get(4) != Some(&msg_type::AUTH_CHALLENGE) {
                    return (frame, false);
                }
                let Ok(Message::AuthChallenge(mut m2)) = wire::decode(&frame) else {
                    return (frame, false);
                };
                m2.p_pi.base.time_cost = new_time_cost;
                if m2.p_pi.base.algorithm == KdfAlgorithm::MemoryHard {
                    m2.p_pi.base.mem_cost = new_mem_cost;
                }
                let out = wire::encode(&Message::AuthChallenge(m2));
                let changed = out != frame;
                (out, changed)
            }
            TamperRule::FlipByte { message_index, offset } => {
                if index != message_index || frame.len() <= 4 {
                    return (frame, false);
                }
                let mut out = frame;
                let at = 4 + offset.min(out.len() - 5);
                out[at] ^= 0x01;
                (out, true)
            }
        }
    }
}

struct RelayState {
    next_index: usize,
    transcript: Transcript,
}

/// Relays one accepted connection to `upstream` until either side closes.
pub fn relay(client: TcpStream, upstream: SocketAddr, rule: TamperRule) -> io::Result<Transcript> {
    let server = TcpStream::connect(upstream)?;
    let state = Arc::new(Mutex::new(RelayState { next_index: 0, transcript: Transcript::new() }));
    let sockets = [client.try_clone()?, server.try_clone()?];

    let pump = |from: TcpStream, mut to: TcpStream, flow: Flow, others: [TcpStream; 2]| {
        let state = state.clone();
        thread::spawn(move || {
            let mut from = from;
            while let Ok(frame) = wire::read_frame(&mut from) {
                let mut st = state.lock().expect("relay state");
                let index = st.next_index;
                st.next_index += 1;
                let (frame, tampered) = rule.apply(index, flow, frame);
                st.transcript.push(flow, frame.clone(), tampered);
                if to.write_all(&frame).and_then(|_| to.flush()).is_err() {
                    break;
                }
            }
            for s in &others {
                let _ = s.shutdown(Shutdown::Both);
            }
        })
    };

    let up = pump(client.try_clone()?, server.try_clone()?, Flow::ClientToServer, [sockets[0].try_clone()?, sockets[1].try_clone()?]);
    let down = pump(server, client, Flow::ServerToClient, sockets);
    let _ = up.join();
    let _ = down.join();
    let st = state.lock().expect("relay state");
    Ok(st.transcript.clone())
}

/// A proxy serving connections one at a time on a background thread.
pub struct MitmProxy {
    addr: SocketAddr,
    rule: Arc<Mutex<TamperRule>>,
    transcripts: Receiver<Transcript>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl MitmProxy {
    /// Listens on an ephemeral loopback port and forwards to `upstream`.
    pub fn spawn(upstream: SocketAddr, rule: TamperRule) -> io::Result<MitmProxy> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let rule = Arc::new(Mutex::new(rule));
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, transcripts) = mpsc::channel();
        let thread = {
            let (rule, stop) = (rule.clone(), stop.clone());
            thread::spawn(move || {
                for client in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(client) = client else { continue };
                    let current = *rule.lock().expect("rule");
                    if let Ok(t) = relay(client, upstream, current) {
                        if tx.send(t).is_err() {
                            break;
                        }
                    }
                }
            })
        };
        Ok(MitmProxy { addr, rule, transcripts, stop, thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Applies to connections accepted from now on.
    pub fn set_rule(&self, rule: TamperRule) {
        *self.rule.lock().expect("rule") = rule;
    }

    /// The transcript of the next finished connection.
    pub fn next_transcript(&self, timeout: Duration) -> Option<Transcript> {
        self.transcripts.recv_timeout(timeout).ok()
    }
}

impl Drop for MitmProxy {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
