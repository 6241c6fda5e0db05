use authstore_core::group::{GroupElement, Scalar};
use authstore_core::pake::{AuthChallenge, AuthConfirm, AuthRequest, AuthResponse};
use authstore_core::wire::{self, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    ClientToServer,
    ServerToClient,
}

/// What a malicious provider knows about one handshake: its own ephemerals
/// and the verifier it served.
#[derive(Clone)]
pub struct ServerView {
    pub x: Scalar,
    pub c: Scalar,
    pub h: GroupElement,
}

/// The handshake messages of a transcript, as the client saw them.
#[derive(Debug, Clone)]
pub struct Handshake {
    pub m1: AuthRequest,
    pub m2: AuthChallenge,
    pub m3: AuthResponse,
    pub m4: Option<AuthConfirm>,
}

/// Raw frames in delivery order. Append-only.
#[derive(Clone, Default)]
pub struct Transcript {
    frames: Vec<(Flow, Vec<u8>)>,
    tampered: Vec<usize>,
    server_view: Option<ServerView>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, flow: Flow, frame: Vec<u8>, tampered: bool) {
        if tampered {
            self.tampered.push(self.frames.len());
        }
        self.frames.push((flow, frame));
    }

    pub fn attach_server_view(&mut self, view: ServerView) {
        self.server_view = Some(view);
    }

    pub fn server_view(&self) -> Option<&ServerView> {
        self.server_view.as_ref()
    }

    pub fn frames(&self) -> &[(Flow, Vec<u8>)] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Indices of frames the proxy rewrote.
    pub fn tampered(&self) -> &[usize] {
        &self.tampered
    }

    pub fn type_bytes(&self) -> Vec<u8> {
        self.frames.iter().map(|(_, f)| f.get(4).copied().unwrap_or(0)).collect()
    }

    /// One `C hex` or `S hex` line per frame; `C` marks client-sent frames.
    pub fn to_hex_lines(&self) -> String {
        let mut out = String::new();
        for (flow, frame) in &self.frames {
            let tag = match flow {
                Flow::ClientToServer => 'C',
                Flow::ServerToClient => 'S',
            };
            out.push(tag);
            out.push(' ');
            for b in frame {
                out.push_str(&format!("{b:02x}"));
            }
            out.push('\n');
        }
        out
    }

    /// M1 to M3 and M4 if present; `None` if the handshake did not get that far.
    pub fn handshake(&self) -> Option<Handshake> {
        let mut msgs = self.frames.iter().map(|(flow, f)| (*flow, wire::decode(f).ok()));
        let m1 = match msgs.next()? {
            (Flow::ClientToServer, Some(Message::AuthRequest(m) | Message::ResetAuthRequest(m))) => m,
            _ => return None,
        };
        let m2 = match msgs.next()? {
            (Flow::ServerToClient, Some(Message::AuthChallenge(m))) => m,
            _ => return None,
        };
        let m3 = match msgs.next()? {
            (Flow::ClientToServer, Some(Message::AuthResponse(m))) => m,
            _ => return None,
        };
        let m4 = match msgs.next() {
            Some((Flow::ServerToClient, Some(Message::AuthConfirm(m)))) => Some(m),
            _ => None,
        };
        Some(Handshake { m1, m2, m3, m4 })
    }
}
