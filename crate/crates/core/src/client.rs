//! Blocking protocol client over any framed byte stream.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{GroupParams, Scalar};
use crate::pake::{channel_keys, client_start, PakeError, SessionKey};
use crate::stretch::{to_auth_scalar, KdfParams, KeyCache, StretchError, UserKey, UserKeyParams};
use crate::wire::{
    ChannelOpener, ChannelSealer, ErrorCode, FramedStream, Message, RegisterRequest, TransportError, WireError,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("authentication failed")]
    AuthFailed,
    #[error("server rejected the request: {0:?}")]
    Server(ErrorCode),
    #[error("unexpected message type 0x{0:02x}")]
    Unexpected(u8),
    #[error("cached key does not match the parameters the server sent")]
    StaleKey,
    #[error(transparent)]
    Pake(#[from] PakeError),
    #[error(transparent)]
    Stretch(#[from] StretchError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl ClientError {
    pub fn is_auth_failure(&self) -> bool {
        matches!(
            self,
            ClientError::AuthFailed
                | ClientError::Server(ErrorCode::AuthFailed)
                | ClientError::Pake(PakeError::ServerAuthFailed)
        )
    }
}

impl From<WireError> for ClientError {
    fn from(e: WireError) -> Self {
        ClientError::Transport(TransportError::Wire(e))
    }
}

fn expect_reply(msg: Message) -> Result<Message, ClientError> {
    match msg {
        Message::ErrorReply(code) => Err(ClientError::Server(code)),
        other => Ok(other),
    }
}

/// What the client proves knowledge of during a handshake.
pub enum Credential<'a> {
    Password { password: &'a [u8], cache: &'a KeyCache },
    /// A stored `K_u`; used only if the server still serves `params`.
    UserKey { key: &'a UserKey, params: &'a UserKeyParams },
    /// A reset token `pi'`; no key derivation.
    ResetToken(&'a Scalar),
}

/// Builds `(P_pi, h)` for a password, through the cache.
pub fn make_verifier<R: RngCore + CryptoRng>(
    group: &GroupParams,
    password: &[u8],
    kdf: &KdfParams,
    cache: &KeyCache,
    rng: &mut R,
) -> Result<(UserKeyParams, UserKey, Vec<u8>), ClientError> {
    let p_pi = UserKeyParams::generate(*kdf, rng);
    let key = cache.user_key_from_password(&p_pi, password)?;
    let h = group.encode(&group.exp_gen(&to_auth_scalar(&key, group)));
    Ok((p_pi, key, h))
}

/// Sends `Register` and waits for `RegisterOk`.
pub fn register<S: Read + Write>(
    stream: &mut FramedStream<S>,
    username: &str,
    p_pi: UserKeyParams,
    h: Vec<u8>,
) -> Result<(), ClientError> {
    stream.send(&Message::Register(RegisterRequest { username: username.to_owned(), p_pi, h }))?;
    match expect_reply(stream.recv()?)? {
        Message::RegisterOk => Ok(()),
        other => Err(ClientError::Unexpected(other.type_byte())),
    }
}

/// Runs M1..M4. On success the stream switches to the sealed channel.
pub fn login<S: Read + Write, R: RngCore + CryptoRng>(
    mut stream: FramedStream<S>,
    group: Arc<GroupParams>,
    username: &str,
    credential: Credential<'_>,
    rng: &mut R,
) -> Result<Session<S>, ClientError> {
    let (m1, mut pake) = client_start(group, username)?;
    let first = match credential {
        Credential::ResetToken(_) => Message::ResetAuthRequest(m1),
        _ => Message::AuthRequest(m1),
    };
    stream.send(&first)?;
    let m2 = match expect_reply(stream.recv()?)? {
        Message::AuthChallenge(m2) => m2,
        other => return Err(ClientError::Unexpected(other.type_byte())),
    };
    let m3 = match credential {
        Credential::Password { password, cache } => pake.on_challenge(&m2, password, cache, rng)?,
        Credential::UserKey { key, params } => {
            if *params != m2.p_pi {
                pake.abort();
                return Err(ClientError::StaleKey);
            }
            pake.on_challenge_with_key(&m2, |_| Ok(key.clone()), rng)?
        }
        Credential::ResetToken(pi) => pake.on_challenge_with_auth_scalar(&m2, pi, rng)?,
    };
    stream.send(&Message::AuthResponse(m3))?;
    let m4 = match stream.recv() {
        Ok(Message::AuthConfirm(m4)) => m4,
        Ok(Message::ErrorReply(code)) => {
            pake.abort();
            return Err(ClientError::Server(code));
        }
        Ok(other) => return Err(ClientError::Unexpected(other.type_byte())),
        Err(TransportError::Io(e)) if is_closed(&e) => {
            pake.abort();
            return Err(ClientError::AuthFailed);
        }
        Err(e) => return Err(e.into()),
    };
    let sk = pake.on_confirm(&m4)?;
    let keys = channel_keys(&sk);
    Ok(Session {
        stream,
        sealer: ChannelSealer::new(keys.client_to_server),
        opener: ChannelOpener::new(keys.server_to_client),
        sk,
        username: pake.username().to_owned(),
        p_pi: m2.p_pi,
    })
}

fn is_closed(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted | io::ErrorKind::BrokenPipe
    )
}

/// An authenticated connection; every request and reply is sealed.
pub struct Session<S> {
    stream: FramedStream<S>,
    sealer: ChannelSealer,
    opener: ChannelOpener,
    sk: SessionKey,
    username: String,
    p_pi: UserKeyParams,
}

impl<S> std::fmt::Debug for Session<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("username", &self.username).finish_non_exhaustive()
    }
}

impl<S: Read + Write> Session<S> {
    pub fn username(&self) -> &str {
        &self.username
    }

    /// `P_pi` as served in M2.
    pub fn p_pi(&self) -> &UserKeyParams {
        &self.p_pi
    }

    pub fn session_key(&self) -> &SessionKey {
        &self.sk
    }

    pub fn request(&mut self, msg: &Message) -> Result<Message, ClientError> {
        let frame = self.sealer.seal(msg);
        self.stream.send(&frame)?;
        match self.stream.recv()? {
            Message::Channel(f) => Ok(self.opener.open(&f)?),
            Message::ErrorReply(code) => Err(ClientError::Server(code)),
            other => Err(ClientError::Unexpected(other.type_byte())),
        }
    }

    /// Current blob and its version; version 0 means none stored.
    pub fn get_blob(&mut self) -> Result<(u64, Vec<u8>), ClientError> {
        match expect_reply(self.request(&Message::GetBlob)?)? {
            Message::BlobData { version, blob } => Ok((version, blob)),
            other => Err(ClientError::Unexpected(other.type_byte())),
        }
    }

    /// Stores `blob` as `version`, which must be the current version plus one.
    pub fn put_blob(&mut self, version: u64, blob: Vec<u8>) -> Result<(), ClientError> {
        match expect_reply(self.request(&Message::PutBlob { version, blob })?)? {
            Message::Ok => Ok(()),
            other => Err(ClientError::Unexpected(other.type_byte())),
        }
    }

    pub fn change_credentials(&mut self, p_pi: UserKeyParams, h: Vec<u8>) -> Result<(), ClientError> {
        match expect_reply(self.request(&Message::ChangeCredentials { p_pi, h })?)? {
            Message::Ok => {
                self.p_pi = p_pi;
                Ok(())
            }
            other => Err(ClientError::Unexpected(other.type_byte())),
        }
    }

    pub fn into_stream(self) -> FramedStream<S> {
        self.stream
    }
}
