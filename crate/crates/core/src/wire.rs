//! Binary framing, message codec and the post-authentication channel.
//!
//! A frame is `u32be body length | body`, where the body is one type byte
//! followed by fields, each `u16be length | bytes`. Three message types end
//! in a tail field that takes the rest of the body without a length prefix:
//! `Channel` (sealed payload), `PutBlob` and `BlobData` (blob bytes). Frames
//! larger than [`MAX_FRAME_LEN`] are rejected before allocation.
//!
//! Inside the channel, each plaintext is itself a complete encoded frame.
//! See `docs/wire.md` for worked hex examples.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use crate::crypto::{self, NONCE_LEN};
use crate::pake::{AuthChallenge, AuthConfirm, AuthRequest, AuthResponse, CONFIRM_LEN};
use crate::stretch::UserKeyParams;

pub const MAX_FRAME_LEN: usize = 1 << 20;

pub mod msg_type {
    pub const AUTH_REQUEST: u8 = 0x01;
    pub const AUTH_CHALLENGE: u8 = 0x02;
    pub const AUTH_RESPONSE: u8 = 0x03;
    pub const AUTH_CONFIRM: u8 = 0x04;
    pub const RESET_AUTH_REQUEST: u8 = 0x05;
    pub const REGISTER: u8 = 0x10;
    pub const REGISTER_OK: u8 = 0x11;
    pub const ERROR_REPLY: u8 = 0x12;
    pub const CHANNEL: u8 = 0x20;
    pub const PUT_BLOB: u8 = 0x30;
    pub const GET_BLOB: u8 = 0x31;
    pub const BLOB_DATA: u8 = 0x32;
    pub const CHANGE_CREDENTIALS: u8 = 0x33;
    pub const RESET_BEGIN: u8 = 0x34;
    pub const RESET_TOKEN: u8 = 0x35;
    pub const OK: u8 = 0x36;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated frame")]
    Truncated,
    #[error("unknown message type 0x{0:02x}")]
    BadType(u8),
    #[error("wrong field count or field size")]
    FieldCount,
    #[error("frame exceeds maximum size")]
    Oversize,
    #[error("channel frame failed authentication")]
    SealAuthFail,
    #[error("channel sequence number out of order")]
    ReplayDetected,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Numeric codes carried by `ErrorReply`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    RateLimited,
    AuthFailed,
    UserExists,
    InvalidUsername,
    InvalidVerifier,
    Protocol,
    VersionConflict,
    NotPermitted,
    UnknownUser,
    Internal,
    Other(u16),
}

impl ErrorCode {
    pub fn code(self) -> u16 {
        match self {
            ErrorCode::RateLimited => 1,
            ErrorCode::AuthFailed => 2,
            ErrorCode::UserExists => 3,
            ErrorCode::InvalidUsername => 4,
            ErrorCode::InvalidVerifier => 5,
            ErrorCode::Protocol => 6,
            ErrorCode::VersionConflict => 7,
            ErrorCode::NotPermitted => 8,
            ErrorCode::UnknownUser => 9,
            ErrorCode::Internal => 10,
            ErrorCode::Other(c) => c,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            1 => ErrorCode::RateLimited,
            2 => ErrorCode::AuthFailed,
            3 => ErrorCode::UserExists,
            4 => ErrorCode::InvalidUsername,
            5 => ErrorCode::InvalidVerifier,
            6 => ErrorCode::Protocol,
            7 => ErrorCode::VersionConflict,
            8 => ErrorCode::NotPermitted,
            9 => ErrorCode::UnknownUser,
            10 => ErrorCode::Internal,
            c => ErrorCode::Other(c),
        }
    }
}

/// Registration request: username, `P_pi`, verifier `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterRequest {
    pub username: String,
    pub p_pi: UserKeyParams,
    pub h: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelFrame {
    pub seq: u64,
    pub sealed: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    AuthRequest(AuthRequest),
    AuthChallenge(AuthChallenge),
    AuthResponse(AuthResponse),
    AuthConfirm(AuthConfirm),
    /// Same shape as M1; asks for a handshake against the reset verifier.
    ResetAuthRequest(AuthRequest),
    Register(RegisterRequest),
    RegisterOk,
    ErrorReply(ErrorCode),
    Channel(ChannelFrame),
    PutBlob { version: u64, blob: Vec<u8> },
    GetBlob,
    BlobData { version: u64, blob: Vec<u8> },
    ChangeCredentials { p_pi: UserKeyParams, h: Vec<u8> },
    ResetBegin { username: String },
    ResetToken { token: String },
    Ok,
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::AuthRequest(_) => AUTH_REQUEST,
            Message::AuthChallenge(_) => AUTH_CHALLENGE,
            Message::AuthResponse(_) => AUTH_RESPONSE,
            Message::AuthConfirm(_) => AUTH_CONFIRM,
            Message::ResetAuthRequest(_) => RESET_AUTH_REQUEST,
            Message::Register(_) => REGISTER,
            Message::RegisterOk => REGISTER_OK,
            Message::ErrorReply(_) => ERROR_REPLY,
            Message::Channel(_) => CHANNEL,
            Message::PutBlob { .. } => PUT_BLOB,
            Message::GetBlob => GET_BLOB,
            Message::BlobData { .. } => BLOB_DATA,
            Message::ChangeCredentials { .. } => CHANGE_CREDENTIALS,
            Message::ResetBegin { .. } => RESET_BEGIN,
            Message::ResetToken { .. } => RESET_TOKEN,
            Message::Ok => OK,
        }
    }
}

struct BodyWriter(Vec<u8>);

impl BodyWriter {
    fn field(&mut self, bytes: &[u8]) -> &mut Self {
        debug_assert!(bytes.len() <= u16::MAX as usize);
        self.0.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
        self.0.extend_from_slice(bytes);
        self
    }

    fn tail(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.extend_from_slice(bytes);
        self
    }
}

/// Encodes a full frame, length prefix included.
pub fn encode(msg: &Message) -> Vec<u8> {
    let mut w = BodyWriter(vec![msg.type_byte()]);
    match msg {
        Message::AuthRequest(m) | Message::ResetAuthRequest(m) => {
            w.field(m.username.as_bytes());
        }
        Message::AuthChallenge(m) => {
            w.field(m.provider_id.as_bytes()).field(&m.enc_x).field(&m.p_pi.encode()).field(&m.commitment);
        }
        Message::AuthResponse(m) => {
            w.field(&m.enc_y).field(&m.enc_v);
        }
        Message::AuthConfirm(m) => {
            w.field(&m.conf);
        }
        Message::Register(r) => {
            w.field(r.username.as_bytes()).field(&r.p_pi.encode()).field(&r.h);
        }
        Message::RegisterOk | Message::GetBlob | Message::Ok => {}
        Message::ErrorReply(code) => {
            w.field(&code.code().to_be_bytes());
        }
        Message::Channel(f) => {
            w.field(&f.seq.to_be_bytes()).tail(&f.sealed);
        }
        Message::PutBlob { version, blob } | Message::BlobData { version, blob } => {
            w.field(&version.to_be_bytes()).tail(blob);
        }
        Message::ChangeCredentials { p_pi, h } => {
            w.field(&p_pi.encode()).field(h);
        }
        Message::ResetBegin { username } => {
            w.field(username.as_bytes());
        }
        Message::ResetToken { token } => {
            w.field(token.as_bytes());
        }
    }
    let body = w.0;
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

struct BodyReader<'a> {
    rest: &'a [u8],
}

impl<'a> BodyReader<'a> {
    fn field(&mut self) -> Result<&'a [u8], WireError> {
        if self.rest.is_empty() {
            return Err(WireError::FieldCount);
        }
        if self.rest.len() < 2 {
            return Err(WireError::Truncated);
        }
        let len = u16::from_be_bytes([self.rest[0], self.rest[1]]) as usize;
        if self.rest.len() < 2 + len {
            return Err(WireError::Truncated);
        }
        let out = &self.rest[2..2 + len];
        self.rest = &self.rest[2 + len..];
        Ok(out)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        self.field()?.try_into().map_err(|_| WireError::FieldCount)
    }

    fn string(&mut self) -> Result<String, WireError> {
        String::from_utf8(self.field()?.to_vec()).map_err(|_| WireError::FieldCount)
    }

    fn params(&mut self) -> Result<UserKeyParams, WireError> {
        UserKeyParams::decode(self.field()?).map_err(|_| WireError::FieldCount)
    }

    fn tail(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.rest).to_vec()
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(WireError::FieldCount)
        }
    }
}

/// Decodes one full frame; trailing bytes are an error.
pub fn decode(frame: &[u8]) -> Result<Message, WireError> {
    if frame.len() < 4 {
        return Err(WireError::Truncated);
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::Oversize);
    }
    let body = &frame[4..];
    if body.len() < len {
        return Err(WireError::Truncated);
    }
    if body.len() > len {
        return Err(WireError::FieldCount);
    }
    decode_body(body)
}

pub fn decode_body(body: &[u8]) -> Result<Message, WireError> {
    use msg_type::*;
    let (&ty, rest) = body.split_first().ok_or(WireError::Truncated)?;
    let mut r = BodyReader { rest };
    let msg = match ty {
        AUTH_REQUEST => Message::AuthRequest(AuthRequest { username: r.string()? }),
        RESET_AUTH_REQUEST => Message::ResetAuthRequest(AuthRequest { username: r.string()? }),
        AUTH_CHALLENGE => Message::AuthChallenge(AuthChallenge {
            provider_id: r.string()?,
            enc_x: r.field()?.to_vec(),
            p_pi: r.params()?,
            commitment: r.field()?.to_vec(),
        }),
        AUTH_RESPONSE => Message::AuthResponse(AuthResponse { enc_y: r.field()?.to_vec(), enc_v: r.field()?.to_vec() }),
        AUTH_CONFIRM => Message::AuthConfirm(AuthConfirm { conf: r.fixed::<CONFIRM_LEN>()? }),
        REGISTER => Message::Register(RegisterRequest { username: r.string()?, p_pi: r.params()?, h: r.field()?.to_vec() }),
        REGISTER_OK => Message::RegisterOk,
        ERROR_REPLY => Message::ErrorReply(ErrorCode::from_code(u16::from_be_bytes(r.fixed::<2>()?))),
        CHANNEL => {
            let seq = u64::from_be_bytes(r.fixed::<8>()?);
            Message::Channel(ChannelFrame { seq, sealed: r.tail() })
        }
        PUT_BLOB => {
            let version = u64::from_be_bytes(r.fixed::<8>()?);
            Message::PutBlob { version, blob: r.tail() }
        }
        GET_BLOB => Message::GetBlob,
        BLOB_DATA => {
            let version = u64::from_be_bytes(r.fixed::<8>()?);
            Message::BlobData { version, blob: r.tail() }
        }
        CHANGE_CREDENTIALS => Message::ChangeCredentials { p_pi: r.params()?, h: r.field()?.to_vec() },
        RESET_BEGIN => Message::ResetBegin { username: r.string()? },
        RESET_TOKEN => Message::ResetToken { token: r.string()? },
        OK => Message::Ok,
        other => return Err(WireError::BadType(other)),
    };
    r.finish()?;
    Ok(msg)
}

fn channel_nonce(seq: u64) -> [u8; NONCE_LEN] {
    let mut nonce = [0u8; NONCE_LEN];
    nonce[4..].copy_from_slice(&seq.to_be_bytes());
    nonce
}

pub fn channel_seal(key: &[u8; 32], seq: u64, plaintext: &[u8]) -> ChannelFrame {
    ChannelFrame { seq, sealed: crypto::seal(key, &channel_nonce(seq), b"", plaintext) }
}

pub fn channel_open(key: &[u8; 32], frame: &ChannelFrame, expected_seq: u64) -> Result<Vec<u8>, WireError> {
    if frame.seq != expected_seq {
        return Err(WireError::ReplayDetected);
    }
    crypto::open(key, &channel_nonce(frame.seq), b"", &frame.sealed).map_err(|_| WireError::SealAuthFail)
}

/// One direction of the encrypted channel, sending side.
pub struct ChannelSealer {
    key: [u8; 32],
    next_seq: u64,
}

impl ChannelSealer {
    pub fn new(key: [u8; 32]) -> Self {
        ChannelSealer { key, next_seq: 0 }
    }

    pub fn seal(&mut self, msg: &Message) -> Message {
        let frame = channel_seal(&self.key, self.next_seq, &encode(msg));
        self.next_seq += 1;
        Message::Channel(frame)
    }
}

/// One direction of the encrypted channel, receiving side.
pub struct ChannelOpener {
    key: [u8; 32],
    expected: u64,
}

impl ChannelOpener {
    pub fn new(key: [u8; 32]) -> Self {
        ChannelOpener { key, expected: 0 }
    }

    pub fn open(&mut self, frame: &ChannelFrame) -> Result<Message, WireError> {
        let plaintext = channel_open(&self.key, frame, self.expected)?;
        self.expected += 1;
        decode(&plaintext)
    }
}

impl Drop for ChannelSealer {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.key);
    }
}

impl Drop for ChannelOpener {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.key);
    }
}

/// Reads one raw frame (length prefix included).
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Vec<u8>, TransportError> {
    let mut len_buf = [0u8; 4];
    reader.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::Oversize.into());
    }
    let mut frame = vec![0u8; 4 + len];
    frame[..4].copy_from_slice(&len_buf);
    reader.read_exact(&mut frame[4..])?;
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Shared record of raw frames crossing a [`FramedStream`].
#[derive(Debug, Clone, Default)]
pub struct FrameLog(Arc<Mutex<Vec<LoggedFrame>>>);

type LoggedFrame = (Direction, Vec<u8>);

impl FrameLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, direction: Direction, frame: &[u8]) {
        self.0.lock().push((direction, frame.to_vec()));
    }

    pub fn frames(&self) -> Vec<(Direction, Vec<u8>)> {
        self.0.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A byte stream speaking whole frames.
pub struct FramedStream<S> {
    inner: S,
    log: Option<FrameLog>,
}

impl<S: Read + Write> FramedStream<S> {
    pub fn new(inner: S) -> Self {
        FramedStream { inner, log: None }
    }

    pub fn with_log(inner: S, log: FrameLog) -> Self {
        FramedStream { inner, log: Some(log) }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let frame = encode(msg);
        if frame.len() - 4 > MAX_FRAME_LEN {
            return Err(WireError::Oversize.into());
        }
        self.inner.write_all(&frame)?;
        self.inner.flush()?;
        if let Some(log) = &self.log {
            log.push(Direction::Sent, &frame);
        }
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, TransportError> {
        let frame = read_frame(&mut self.inner)?;
        if let Some(log) = &self.log {
            log.push(Direction::Received, &frame);
        }
        Ok(decode(&frame)?)
    }

    pub fn get_ref(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

/// One end of an in-memory byte pipe pair; see [`duplex`].
pub struct DuplexEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
}

/// Two connected in-memory endpoints. Dropping one makes reads on the other
/// return EOF.
pub fn duplex() -> (DuplexEnd, DuplexEnd) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        DuplexEnd { tx: a_tx, rx: a_rx, pending: VecDeque::new() },
        DuplexEnd { tx: b_tx, rx: b_rx, pending: VecDeque::new() },
    )
}

impl Read for DuplexEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.pending.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.pending.extend(chunk),
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for DuplexEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer dropped"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
