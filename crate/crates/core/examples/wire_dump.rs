//! Prints one frame of each kind from a toy-group handshake with fixed
//! ephemerals; `docs/wire.md` quotes this output.

use authstore_core::group::GroupProfile;
use authstore_core::pake::{channel_keys, client_start, ServerSession, Verifier, VerifierKind};
use authstore_core::stretch::{KdfParams, UserKeyParams};
use authstore_core::wire::{encode, ChannelSealer, ErrorCode, Message, RegisterRequest};

fn show(name: &str, msg: &Message) {
    println!("{name:<18} {}", hex::encode(encode(msg)));
}

fn main() {
    let group = GroupProfile::Toy.params();
    let s = |v: u64| group.scalar_from_u64(v).unwrap();
    let p_pi = UserKeyParams::new(KdfParams::test_iterated([0x11; 16], 1000).unwrap(), [0x22; 16]);
    let h = group.exp_gen(&s(3));
    let verifier = Verifier { username: "al".into(), p_pi, h: h.clone(), kind: VerifierKind::Password };

    show("Register", &Message::Register(RegisterRequest { username: "al".into(), p_pi, h: group.encode(&h) }));
    show("RegisterOk", &Message::RegisterOk);
    let (m1, mut client) = client_start(group.clone(), "al").unwrap();
    show("AuthRequest", &Message::AuthRequest(m1.clone()));
    let (m2, mut server) = ServerSession::start_with_ephemerals(group.clone(), "B", &m1, &verifier, s(6), s(2)).unwrap();
    show("AuthChallenge", &Message::AuthChallenge(m2.clone()));
    let m3 = client.on_challenge_with_ephemeral(&m2, &s(3), &s(7)).unwrap();
    show("AuthResponse", &Message::AuthResponse(m3.clone()));
    let m4 = server.on_response(&m3).unwrap();
    show("AuthConfirm", &Message::AuthConfirm(m4.clone()));
    let sk = client.on_confirm(&m4).unwrap();
    let mut sealer = ChannelSealer::new(channel_keys(&sk).client_to_server);
    show("GetBlob (inner)", &Message::GetBlob);
    show("Channel", &sealer.seal(&Message::GetBlob));
    show("PutBlob (inner)", &Message::PutBlob { version: 1, blob: b"hi".to_vec() });
    show("ErrorReply", &Message::ErrorReply(ErrorCode::VersionConflict));
}
