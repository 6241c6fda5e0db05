//! The four-message asymmetric PAKE with parameter retrieval.
//!
//! ```text
//!  client (A, pw)                                server (B, h = g^pi, P_pi)
//!  M1  A                          ------------->
//!                                 <-------------  M2  B, E_h(g^x), P_pi, g^c
//!  pi = U(P_pi, pw), v = (g^c)^pi
//!  sk = H(A, B, X, Y, X^y)
//!  M3  E_h(g^y), seal_sk(v)       ------------->
//!                                                 sk = H(A, B, g^x, Y, Y^x)
//!                                                 check v == h^c
//!                                 <-------------  M4  H(sk || 1)
//! ```
//!
//! `E_h` is the blinding cipher from [`crate::group`] keyed by the encoded
//! verifier `h`. Both sides hash the element bytes they actually hold, so a
//! client with the wrong `h` silently ends up with a different `sk`.

use std::fmt;
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::account::canonicalize_username;
use crate::crypto::{self, ct_eq, labeled_hash, NONCE_LEN};
use crate::group::{BlindContext, BlindDirection, GroupElement, GroupError, GroupParams, Scalar};
use crate::stretch::{to_auth_scalar, KeyCache, StretchError, UserKey, UserKeyParams};

pub const SESSION_KEY_LEN: usize = 32;
pub const CONFIRM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PakeError {
    #[error("invalid username")]
    InvalidUsername,
    #[error("malformed challenge: {0}")]
    MalformedChallenge(GroupError),
    #[error(transparent)]
    Stretch(#[from] StretchError),
    #[error("message received out of order")]
    ProtocolOrder,
    #[error("authentication failed")]
    AuthFailed,
    #[error("server failed to authenticate")]
    ServerAuthFailed,
}

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SessionKey([u8; SESSION_KEY_LEN]);

impl SessionKey {
    pub fn from_bytes(bytes: [u8; SESSION_KEY_LEN]) -> Self {
        SessionKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SESSION_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

/// Directional keys for the post-authentication channel.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct ChannelKeys {
    pub client_to_server: [u8; 32],
    pub server_to_client: [u8; 32],
}

pub fn channel_keys(sk: &SessionKey) -> ChannelKeys {
    ChannelKeys {
        client_to_server: labeled_hash("AS-c2s", &[sk.as_bytes()]),
        server_to_client: labeled_hash("AS-s2c", &[sk.as_bytes()]),
    }
}

/// `sk = H("AS-sk", A, B, X, Y, Z)` over encoded elements.
pub fn derive_session_key(username: &[u8], provider: &[u8], x: &[u8], y: &[u8], z: &[u8]) -> SessionKey {
    SessionKey(labeled_hash("AS-sk", &[username, provider, x, y, z]))
}

/// Key sealing `v` in M3.
pub fn confirm_key(sk: &SessionKey) -> [u8; 32] {
    labeled_hash("AS-esk", &[sk.as_bytes()])
}

/// The M4 value `H(sk || 1)`.
pub fn confirmation_tag(sk: &SessionKey) -> [u8; CONFIRM_LEN] {
    labeled_hash("AS-conf1", &[sk.as_bytes()])
}

/// Each `sk` seals exactly one value, so a fixed nonce is safe.
pub const CONFIRM_NONCE: [u8; NONCE_LEN] = [0u8; NONCE_LEN];

pub fn seal_confirmation_value(sk: &SessionKey, v: &[u8]) -> Vec<u8> {
    crypto::seal(&confirm_key(sk), &CONFIRM_NONCE, b"", v)
}

pub fn open_confirmation_value(sk: &SessionKey, sealed: &[u8]) -> Result<Vec<u8>, crypto::SealError> {
    crypto::open(&confirm_key(sk), &CONFIRM_NONCE, b"", sealed)
}

/// M1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub username: String,
}

/// M2. Element fields are raw encodings; the client validates them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthChallenge {
    pub provider_id: String,
    pub enc_x: Vec<u8>,
    pub p_pi: UserKeyParams,
    pub commitment: Vec<u8>,
}

/// M3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthResponse {
    pub enc_y: Vec<u8>,
    pub enc_v: Vec<u8>,
}

/// M4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthConfirm {
    pub conf: [u8; CONFIRM_LEN],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifierKind {
    /// The account's password verifier.
    Password,
    /// A one-time reset verifier.
    ResetToken,
    /// Fabricated for an unknown user; never yields a grant.
    Decoy,
}

/// What the server needs to answer M1.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub username: String,
    pub p_pi: UserKeyParams,
    pub h: GroupElement,
    pub kind: VerifierKind,
}

/// Proof that a server session finished successfully for `username`.
/// Only [`ServerSession::grant`] creates one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthGrant {
    username: String,
    via_reset: bool,
}

impl AuthGrant {
    pub fn username(&self) -> &str {
        &self.username
    }

    pub fn via_reset(&self) -> bool {
        self.via_reset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientState {
    AwaitChallenge,
    AwaitConfirm,
    Established,
    Failed,
}

pub struct ClientSession {
    group: Arc<GroupParams>,
    username: String,
    provider: Option<String>,
    state: ClientState,
    sk: Option<SessionKey>,
}

struct ParsedChallenge {
    enc_x: GroupElement,
    commitment: GroupElement,
}

/// Step 1: canonicalize the username and emit M1.
pub fn client_start(group: Arc<GroupParams>, username: &str) -> Result<(AuthRequest, ClientSession), PakeError> {
    let username = canonicalize_username(username).map_err(|_| PakeError::InvalidUsername)?;
    let session = ClientSession {
        group,
        username: username.clone(),
        provider: None,
        state: ClientState::AwaitChallenge,
        sk: None,
    };
    Ok((AuthRequest { username }, session))
}

impl ClientSession {
    pub fn state(&self) -> ClientState {
        self.state
    }

    pub fn username(&self) -> &str {
        &self.username
    }

    /// Provider id learned from M2.
    pub fn provider(&self) -> Option<&str> {
        self.provider.as_deref()
    }

    /// Available once M3 has been produced.
    pub fn session_key(&self) -> Option<&SessionKey> {
        self.sk.as_ref()
    }

    fn parse(&mut self, m2: &AuthChallenge) -> Result<ParsedChallenge, PakeError> {
        if self.state != ClientState::AwaitChallenge {
            return Err(PakeError::ProtocolOrder);
        }
        let parsed = (|| {
            Ok(ParsedChallenge {
                enc_x: self.group.validate_element(&m2.enc_x)?,
                commitment: self.group.validate_element(&m2.commitment)?,
            })
        })()
        .map_err(|e: GroupError| {
            self.state = ClientState::Failed;
            PakeError::MalformedChallenge(e)
        })?;
        Ok(parsed)
    }

    /// Step 3 with the password: derives `pi` through the cache.
    pub fn on_challenge<R: RngCore + CryptoRng>(
        &mut self,
        m2: &AuthChallenge,
        password: &[u8],
        cache: &KeyCache,
        rng: &mut R,
    ) -> Result<AuthResponse, PakeError> {
        self.on_challenge_with_key(m2, |params| cache.user_key_from_password(params, password), rng)
    }

    /// Step 3 with a caller-supplied user key, e.g. one stored in a vault.
    pub fn on_challenge_with_key<R, F>(&mut self, m2: &AuthChallenge, user_key: F, rng: &mut R) -> Result<AuthResponse, PakeError>
    where
        R: RngCore + CryptoRng,
        F: FnOnce(&UserKeyParams) -> Result<UserKey, StretchError>,
    {
        let parsed = self.parse(m2)?;
        let key = user_key(&m2.p_pi).map_err(|e| {
            self.state = ClientState::Failed;
            PakeError::Stretch(e)
        })?;
        let pi = to_auth_scalar(&key, &self.group);
        let y = self.group.random_scalar(rng);
        Ok(self.respond(m2, parsed, &pi, &y))
    }

    /// Step 3 with `pi` given directly (reset tokens skip key derivation).
    pub fn on_challenge_with_auth_scalar<R: RngCore + CryptoRng>(
        &mut self,
        m2: &AuthChallenge,
        pi: &Scalar,
        rng: &mut R,
    ) -> Result<AuthResponse, PakeError> {
        let parsed = self.parse(m2)?;
        let y = self.group.random_scalar(rng);
        Ok(self.respond(m2, parsed, pi, &y))
    }

    /// Step 3 with both `pi` and the ephemeral `y` fixed.
    pub fn on_challenge_with_ephemeral(&mut self, m2: &AuthChallenge, pi: &Scalar, y: &Scalar) -> Result<AuthResponse, PakeError> {
        let parsed = self.parse(m2)?;
        Ok(self.respond(m2, parsed, pi, y))
    }

    fn respond(&mut self, m2: &AuthChallenge, parsed: ParsedChallenge, pi: &Scalar, y: &Scalar) -> AuthResponse {
        let g = &self.group;
        let h = g.encode(&g.exp_gen(pi));
        let ctx = BlindContext { username: self.username.as_bytes(), provider: m2.provider_id.as_bytes() };

        let x_share = g.blind_decrypt(&h, BlindDirection::Server, &ctx, &parsed.enc_x);
        let v = g.exp(&parsed.commitment, pi);
        let y_share = g.exp_gen(y);
        let z = g.exp(&x_share, y);
        let sk = derive_session_key(
            ctx.username,
            ctx.provider,
            &g.encode(&x_share),
            &g.encode(&y_share),
            &g.encode(&z),
        );
        let enc_y = g.encode(&g.blind_encrypt(&h, BlindDirection::Client, &ctx, &y_share));
        let enc_v = seal_confirmation_value(&sk, &g.encode(&v));

        self.provider = Some(m2.provider_id.clone());
        self.sk = Some(sk);
        self.state = ClientState::AwaitConfirm;
        AuthResponse { enc_y, enc_v }
    }

    /// Step 5: checks `H(sk || 1)` from the server.
    pub fn on_confirm(&mut self, m4: &AuthConfirm) -> Result<SessionKey, PakeError> {
        if self.state != ClientState::AwaitConfirm {
            return Err(PakeError::ProtocolOrder);
        }
        let sk = self.sk.as_ref().expect("session key is set in AwaitConfirm");
        if ct_eq(&m4.conf, &confirmation_tag(sk)) {
            self.state = ClientState::Established;
            Ok(sk.clone())
        } else {
            self.state = ClientState::Failed;
            Err(PakeError::ServerAuthFailed)
        }
    }

    /// Marks the session failed, e.g. when the server closed without M4.
    pub fn abort(&mut self) {
        self.state = ClientState::Failed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerState {
    AwaitResponse,
    Done,
    Failed,
}

pub struct ServerSession {
    group: Arc<GroupParams>,
    provider: String,
    verifier: Verifier,
    x_share: GroupElement,
    x: Scalar,
    c: Scalar,
    state: ServerState,
    sk: Option<SessionKey>,
}

impl ServerSession {
    /// Step 2 with fresh `x`, `c`.
    pub fn start<R: RngCore + CryptoRng>(
        group: Arc<GroupParams>,
        provider: &str,
        m1: &AuthRequest,
        verifier: &Verifier,
        rng: &mut R,
    ) -> Result<(AuthChallenge, ServerSession), PakeError> {
        let x = group.random_scalar(rng);
        let c = group.random_scalar(rng);
        Self::start_with_ephemerals(group, provider, m1, verifier, x, c)
    }

    /// Step 2 with caller-chosen `x`, `c`. They must be fresh per session.
    pub fn start_with_ephemerals(
        group: Arc<GroupParams>,
        provider: &str,
        m1: &AuthRequest,
        verifier: &Verifier,
        x: Scalar,
        c: Scalar,
    ) -> Result<(AuthChallenge, ServerSession), PakeError> {
        let username = canonicalize_username(&m1.username).map_err(|_| PakeError::InvalidUsername)?;
        if username != verifier.username {
            return Err(PakeError::InvalidUsername);
        }
        let h = group.encode(&verifier.h);
        let ctx = BlindContext { username: username.as_bytes(), provider: provider.as_bytes() };
        let x_share = group.exp_gen(&x);
        let enc_x = group.encode(&group.blind_encrypt(&h, BlindDirection::Server, &ctx, &x_share));
        let commitment = group.encode(&group.exp_gen(&c));
        let m2 = AuthChallenge { provider_id: provider.to_string(), enc_x, p_pi: verifier.p_pi, commitment };
        let session = ServerSession {
            group,
            provider: provider.to_string(),
            verifier: verifier.clone(),
            x_share,
            x,
            c,
            state: ServerState::AwaitResponse,
            sk: None,
        };
        Ok((m2, session))
    }

    pub fn state(&self) -> ServerState {
        self.state
    }

    pub fn username(&self) -> &str {
        &self.verifier.username
    }

    pub fn verifier_kind(&self) -> VerifierKind {
        self.verifier.kind
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        self.sk.as_ref()
    }

    /// Step 4. Every failure, malformed `Y`, seal failure or `v != h^c`,
    /// collapses into [`PakeError::AuthFailed`].
    pub fn on_response(&mut self, m3: &AuthResponse) -> Result<AuthConfirm, PakeError> {
        if self.state != ServerState::AwaitResponse {
            return Err(PakeError::ProtocolOrder);
        }
        self.state = ServerState::Failed;
        let g = &self.group;
        let enc_y = g.validate_element(&m3.enc_y).map_err(|_| PakeError::AuthFailed)?;
        let h = g.encode(&self.verifier.h);
        let ctx = BlindContext { username: self.verifier.username.as_bytes(), provider: self.provider.as_bytes() };
        let y_share = g.blind_decrypt(&h, BlindDirection::Client, &ctx, &enc_y);
        let z = g.exp(&y_share, &self.x);
        let sk = derive_session_key(
            ctx.username,
            ctx.provider,
            &g.encode(&self.x_share),
            &g.encode(&y_share),
            &g.encode(&z),
        );
        let v = open_confirmation_value(&sk, &m3.enc_v).map_err(|_| PakeError::AuthFailed)?;
        let expected = g.encode(&g.exp(&self.verifier.h, &self.c));
        if !ct_eq(&v, &expected) {
            return Err(PakeError::AuthFailed);
        }
        let conf = confirmation_tag(&sk);
        self.sk = Some(sk);
        self.state = ServerState::Done;
        Ok(AuthConfirm { conf })
    }

    /// The grant for a finished session, unless it ran against a decoy.
    pub fn grant(&self) -> Option<AuthGrant> {
        match (self.state, self.verifier.kind) {
            (ServerState::Done, VerifierKind::Password) => {
                Some(AuthGrant { username: self.verifier.username.clone(), via_reset: false })
            }
            (ServerState::Done, VerifierKind::ResetToken) => {
                Some(AuthGrant { username: self.verifier.username.clone(), via_reset: true })
            }
            _ => None,
        }
    }
}
