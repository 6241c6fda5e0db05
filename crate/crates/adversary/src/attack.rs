//! Offline and online attacks against captured or live handshakes.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use authstore_core::client::ClientError;
use authstore_core::crypto::ct_eq;
use authstore_core::group::{BlindContext, BlindDirection, GroupElement, GroupParams};
use authstore_core::pake::{
    confirmation_tag, derive_session_key, open_confirmation_value, AuthRequest, AuthResponse,
};
use authstore_core::stretch::{derive_base_key, derive_user_key, to_auth_scalar, KeyCache, UserKeyParams};
use authstore_core::wire::{FramedStream, Message};
use rand::{CryptoRng, RngCore};

use crate::transcript::{ServerView, Transcript};

/// The decrypt-and-check attack of a provider that also controls the
/// parameters the client saw.
///
/// For each candidate the attacker derives `pi*` under the `P_pi` the client
/// received, sets `h* = g^pi*`, unblinds both shares with `h*` and tries to
/// rebuild `sk` from its own `x`. A candidate is confirmed when the opened
/// (or, for an unsealed response, the raw) `v` equals `(h*)^c`.
pub fn dictionary_attack<P: AsRef<[u8]>>(
    group: &GroupParams,
    transcript: &Transcript,
    view: &ServerView,
    candidates: &[P],
) -> Vec<Vec<u8>> {
    let Some(hs) = transcript.handshake() else { return Vec::new() };
    let (Ok(enc_x), Ok(enc_y)) = (group.validate_element(&hs.m2.enc_x), group.validate_element(&hs.m3.enc_y)) else {
        return Vec::new();
    };
    let ctx = BlindContext { username: hs.m1.username.as_bytes(), provider: hs.m2.provider_id.as_bytes() };
    let x_share = group.encode(&group.exp_gen(&view.x));

    let mut confirmed = Vec::new();
    for candidate in candidates {
        let candidate = candidate.as_ref();
        let Ok(base) = derive_base_key(&hs.m2.p_pi.base, candidate) else { continue };
        let pi = to_auth_scalar(&derive_user_key(&base, &hs.m2.p_pi.user_salt), group);
        let h_star = group.exp_gen(&pi);
        let h_bytes = group.encode(&h_star);
        let expected_v = group.encode(&group.exp(&h_star, &view.c));

        if ct_eq(&hs.m3.enc_v, &expected_v) {
            confirmed.push(candidate.to_vec());
            continue;
        }
        let x_guess = group.encode(&group.blind_decrypt(&h_bytes, BlindDirection::Server, &ctx, &enc_x));
        let y_guess = group.blind_decrypt(&h_bytes, BlindDirection::Client, &ctx, &enc_y);
        let z_guess = group.encode(&group.exp(&y_guess, &view.x));
        let y_bytes = group.encode(&y_guess);
        let opened = [&x_guess, &x_share].into_iter().any(|x| {
            let sk = derive_session_key(ctx.username, ctx.provider, x, &y_bytes, &z_guess);
            matches!(open_confirmation_value(&sk, &hs.m3.enc_v), Ok(v) if ct_eq(&v, &expected_v))
        });
        if opened {
            confirmed.push(candidate.to_vec());
        }
    }
    confirmed
}

/// A deliberately broken client that sends `v` in the clear instead of
/// sealing it under `sk`. Exists only in this harness.
pub mod broken {
    use super::*;

    /// Runs M1 to M3 (and M4 if the server sends it). Returns whether the
    /// server confirmed.
    pub fn login_unsealed<S: Read + Write, R: RngCore + CryptoRng>(
        stream: &mut FramedStream<S>,
        group: &Arc<GroupParams>,
        username: &str,
        password: &[u8],
        cache: &KeyCache,
        rng: &mut R,
    ) -> Result<bool, ClientError> {
        stream.send(&Message::AuthRequest(AuthRequest { username: username.to_owned() }))?;
        let m2 = match stream.recv()? {
            Message::AuthChallenge(m2) => m2,
            Message::ErrorReply(code) => return Err(ClientError::Server(code)),
            other => return Err(ClientError::Unexpected(other.type_byte())),
        };
        let g = group;
        let key = cache.user_key_from_password(&m2.p_pi, password)?;
        let pi = to_auth_scalar(&key, g);
        let h = g.encode(&g.exp_gen(&pi));
        let ctx = BlindContext { username: username.as_bytes(), provider: m2.provider_id.as_bytes() };
        let enc_x = g.validate_element(&m2.enc_x).map_err(|_| ClientError::AuthFailed)?;
        let commitment = g.validate_element(&m2.commitment).map_err(|_| ClientError::AuthFailed)?;
        let x_share = g.blind_decrypt(&h, BlindDirection::Server, &ctx, &enc_x);
        let y = g.random_scalar(rng);
        let y_share = g.exp_gen(&y);
        let enc_y = g.encode(&g.blind_encrypt(&h, BlindDirection::Client, &ctx, &y_share));
        let v = g.encode(&g.exp(&commitment, &pi));
        stream.send(&Message::AuthResponse(AuthResponse { enc_y, enc_v: v }))?;
        let sk = derive_session_key(
            ctx.username,
            ctx.provider,
            &g.encode(&x_share),
            &g.encode(&y_share),
            &g.encode(&g.exp(&x_share, &y)),
        );
        Ok(matches!(stream.recv(), Ok(Message::AuthConfirm(m4)) if ct_eq(&m4.conf, &confirmation_tag(&sk))))
    }
}

/// What an attacker lifted from the provider's account database.
#[derive(Clone)]
pub struct StolenVerifier {
    pub username: String,
    /// `None` models a thief who got `P_pi` but not `h`.
    pub h: Option<GroupElement>,
    pub p_pi: UserKeyParams,
}

/// Plays the client role with only `(h, P_pi)`.
///
/// `h` unblinds `X` and blinds `Y`, so the attacker can compute `sk`. The
/// remaining unknown is `v = h^c`: `c` never leaves the server and `pi` is
/// not in the stolen data, so the attacker substitutes `h^1`, i.e. guesses
/// `c = 1`. Returns whether the server confirmed.
pub fn stolen_verifier_attack<R: RngCore + CryptoRng>(
    group: &Arc<GroupParams>,
    stolen: &StolenVerifier,
    server: SocketAddr,
    rng: &mut R,
) -> bool {
    let Ok(conn) = TcpStream::connect(server) else { return false };
    let mut framed = FramedStream::new(conn);
    if framed.send(&Message::AuthRequest(AuthRequest { username: stolen.username.clone() })).is_err() {
        return false;
    }
    let Ok(Message::AuthChallenge(m2)) = framed.recv() else { return false };
    let g = group;
    let h = match &stolen.h {
        Some(h) => h.clone(),
        None => g.exp_gen(&g.random_scalar(rng)),
    };
    let h_bytes = g.encode(&h);
    let ctx = BlindContext { username: stolen.username.as_bytes(), provider: m2.provider_id.as_bytes() };
    let Ok(enc_x) = g.validate_element(&m2.enc_x) else { return false };
    let x_share = g.blind_decrypt(&h_bytes, BlindDirection::Server, &ctx, &enc_x);
    let y = g.random_scalar(rng);
    let y_share = g.exp_gen(&y);
    let sk = derive_session_key(
        ctx.username,
        ctx.provider,
        &g.encode(&x_share),
        &g.encode(&y_share),
        &g.encode(&g.exp(&x_share, &y)),
    );
    let enc_y = g.encode(&g.blind_encrypt(&h_bytes, BlindDirection::Client, &ctx, &y_share));
    let enc_v = authstore_core::pake::seal_confirmation_value(&sk, &h_bytes);
    if framed.send(&Message::AuthResponse(AuthResponse { enc_y, enc_v })).is_err() {
        return false;
    }
    matches!(framed.recv(), Ok(Message::AuthConfirm(m4)) if ct_eq(&m4.conf, &confirmation_tag(&sk)))
}

/// Sends a fresh M1 and answers the new challenge with a captured M3.
pub fn replay_response(server: SocketAddr, username: &str, captured: &AuthResponse) -> bool {
    let Ok(conn) = TcpStream::connect(server) else { return false };
    let mut framed = FramedStream::new(conn);
    if framed.send(&Message::AuthRequest(AuthRequest { username: username.to_owned() })).is_err() {
        return false;
    }
    if !matches!(framed.recv(), Ok(Message::AuthChallenge(_))) {
        return false;
    }
    if framed.send(&Message::AuthResponse(captured.clone())).is_err() {
        return false;
    }
    matches!(framed.recv(), Ok(Message::AuthConfirm(_)))
}
