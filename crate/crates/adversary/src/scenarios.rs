//! Self-contained attack scenarios, each producing a [`Report`].

use std::io;
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use authstore_core::client::{self, ClientError, Credential};
use authstore_core::group::{GroupParams, GroupProfile};
use authstore_core::pake::PakeError;
use authstore_core::stretch::{KdfParams, KeyCache};
use authstore_core::wire::{Direction, FrameLog, FramedStream};
use authstore_server::{Server, ServerConfig, ServerHandle};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;

use crate::attack::{broken, dictionary_attack, replay_response, stolen_verifier_attack, StolenVerifier};
use crate::insider::InsiderServer;
use crate::proxy::{MitmProxy, TamperRule};
use crate::transcript::{Flow, Transcript};

const WAIT: Duration = Duration::from_secs(30);

/// Costs the proxy writes into M2 in the parameter-attack scenarios.
pub const WEAK_TIME_COST: u32 = 1;
pub const WEAK_MEM_KIB: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    /// Honest logins through a rule-free proxy; success means the proxy
    /// transcript equals the client's own record byte for byte.
    Transparency,
    /// The proxy weakens `P_pi`; success means the provider accepted.
    WeakenParams,
    /// The proxy flips a byte of M4; success means the client rejected it.
    FlipConfirm,
    /// Insider dictionary attack on weakened logins; success means the true
    /// password was confirmed offline.
    ParameterAttack,
    /// As `parameter-attack`, against a client that sends `v` unsealed.
    ParameterAttackBroken,
    /// Impersonation from a stolen `(h, P_pi)`; success means the provider
    /// accepted.
    StolenVerifier,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Transparency => "transparency",
            Scenario::WeakenParams => "weaken-params",
            Scenario::FlipConfirm => "flip-confirm",
            Scenario::ParameterAttack => "parameter-attack",
            Scenario::ParameterAttackBroken => "parameter-attack-broken",
            Scenario::StolenVerifier => "stolen-verifier",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub trials: usize,
    /// Dictionary size, true password included.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options { trials: 100, candidates: 1000, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub trials: usize,
    pub successes: usize,
    pub details: serde_json::Value,
}

pub fn run(scenario: Scenario, opts: &Options) -> io::Result<Report> {
    match scenario {
        Scenario::Transparency => transparency(opts),
        Scenario::WeakenParams => weaken_params(opts),
        Scenario::FlipConfirm => flip_confirm(opts),
        Scenario::ParameterAttack => parameter_attack(opts, false),
        Scenario::ParameterAttackBroken => parameter_attack(opts, true),
        Scenario::StolenVerifier => stolen_verifier(opts),
    }
}

/// A provider on a temporary data directory with throttling disabled, so
/// repeated failures measure the protocol rather than the rate limiter.
pub struct Lab {
    _dir: tempfile::TempDir,
    pub server: ServerHandle,
}

impl Lab {
    pub fn start() -> io::Result<Lab> {
        let dir = tempfile::tempdir()?;
        let mut config = ServerConfig::new(dir.path());
        config.profile = GroupProfile::Test256;
        config.rate_limit = u32::MAX;
        config.decoy_kdf = test_kdf([0; 16], 2);
        let server = Server::bind(config).map_err(io::Error::other)?.spawn();
        Ok(Lab { _dir: dir, server })
    }

    pub fn group(&self) -> Arc<GroupParams> {
        self.server.group()
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }
}

fn test_kdf(salt: [u8; 16], rounds: u32) -> KdfParams {
    KdfParams::test_iterated(salt, rounds).expect("valid iterated parameters")
}

/// Memory-hard parameters well above what the proxy downgrades them to.
pub fn honest_memory_hard<R: Rng>(rng: &mut R) -> KdfParams {
    KdfParams::memory_hard(rng.gen(), 1024, 2, 1).expect("valid memory-hard parameters")
}

pub fn random_password<R: Rng>(rng: &mut R) -> Vec<u8> {
    let len = rng.gen_range(8..24);
    (0..len).map(|_| rng.gen_range(b'!'..=b'~')).collect()
}

/// Registers over a fresh connection to `addr`.
pub fn register<R: Rng + rand::CryptoRng>(
    addr: SocketAddr,
    group: &GroupParams,
    username: &str,
    password: &[u8],
    kdf: &KdfParams,
    rng: &mut R,
) -> Result<(), ClientError> {
    let (p_pi, _, h) = client::make_verifier(group, password, kdf, &KeyCache::new(), rng)?;
    let conn = TcpStream::connect(addr).map_err(|e| ClientError::Transport(e.into()))?;
    client::register(&mut FramedStream::new(conn), username, p_pi, h)
}

fn connect(addr: SocketAddr) -> io::Result<FramedStream<TcpStream>> {
    Ok(FramedStream::new(TcpStream::connect(addr)?))
}

fn missing(what: &str) -> io::Error {
    io::Error::new(io::ErrorKind::TimedOut, format!("no {what} recorded"))
}

/// Whether a proxy transcript equals the client's own frame record.
pub fn matches_client_log(transcript: &Transcript, log: &FrameLog) -> bool {
    let mine: Vec<(Flow, Vec<u8>)> = log
        .frames()
        .into_iter()
        .map(|(d, f)| (if d == Direction::Sent { Flow::ClientToServer } else { Flow::ServerToClient }, f))
        .collect();
    transcript.frames() == mine.as_slice()
}

fn transparency(opts: &Options) -> io::Result<Report> {
    let lab = Lab::start()?;
    let group = lab.group();
    let proxy = MitmProxy::spawn(lab.addr(), TamperRule::None)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut successes = 0;
    let mut handshake_frames = Vec::new();
    for i in 0..opts.trials {
        let user = format!("user{i}");
        let pw = random_password(&mut rng);
        let kdf = test_kdf(rng.gen(), 3);
        register(lab.addr(), &group, &user, &pw, &kdf, &mut rng).map_err(io::Error::other)?;
        let log = FrameLog::new();
        let framed = FramedStream::with_log(TcpStream::connect(proxy.addr())?, log.clone());
        let cache = KeyCache::new();
        let ok = client::login(framed, group.clone(), &user, Credential::Password { password: &pw, cache: &cache }, &mut rng)
            .and_then(|mut s| s.get_blob())
            .is_ok();
        let t = proxy.next_transcript(WAIT).ok_or_else(|| missing("transcript"))?;
        handshake_frames.push(t.type_bytes().iter().take_while(|&&b| b != 0x20).count());
        if ok && matches_client_log(&t, &log) {
            successes += 1;
        }
    }
    handshake_frames.sort_unstable();
    handshake_frames.dedup();
    Ok(Report {
        scenario: Scenario::Transparency.name().into(),
        trials: opts.trials,
        successes,
        details: json!({ "event": "login succeeded and transcripts were identical", "handshake_frames": handshake_frames }),
    })
}

fn weaken_params(opts: &Options) -> io::Result<Report> {
    let lab = Lab::start()?;
    let group = lab.group();
    let rule = TamperRule::WeakenParams { new_time_cost: WEAK_TIME_COST, new_mem_cost: WEAK_MEM_KIB };
    let proxy = MitmProxy::spawn(lab.addr(), rule)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut successes = 0;
    let mut client_auth_failures = 0;
    for i in 0..opts.trials {
        let user = format!("user{i}");
        let pw = random_password(&mut rng);
        register(lab.addr(), &group, &user, &pw, &honest_memory_hard(&mut rng), &mut rng).map_err(io::Error::other)?;
        let cache = KeyCache::new();
        let result =
            client::login(connect(proxy.addr())?, group.clone(), &user, Credential::Password { password: &pw, cache: &cache }, &mut rng);
        match result {
            Ok(_) => successes += 1,
            Err(e) if e.is_auth_failure() => client_auth_failures += 1,
            Err(_) => {}
        }
        proxy.next_transcript(WAIT).ok_or_else(|| missing("transcript"))?;
    }
    Ok(Report {
        scenario: Scenario::WeakenParams.name().into(),
        trials: opts.trials,
        successes,
        details: json!({
            "event": "provider accepted a login under weakened parameters",
            "client_auth_failures": client_auth_failures,
            "weak_time_cost": WEAK_TIME_COST,
            "weak_mem_kib": WEAK_MEM_KIB,
        }),
    })
}

fn flip_confirm(opts: &Options) -> io::Result<Report> {
    let lab = Lab::start()?;
    let group = lab.group();
    let proxy = MitmProxy::spawn(lab.addr(), TamperRule::FlipByte { message_index: 3, offset: 3 })?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut successes = 0;
    for i in 0..opts.trials {
        let user = format!("user{i}");
        let pw = random_password(&mut rng);
        register(lab.addr(), &group, &user, &pw, &test_kdf(rng.gen(), 3), &mut rng).map_err(io::Error::other)?;
        let cache = KeyCache::new();
        let result =
            client::login(connect(proxy.addr())?, group.clone(), &user, Credential::Password { password: &pw, cache: &cache }, &mut rng);
        if matches!(result, Err(ClientError::Pake(PakeError::ServerAuthFailed))) {
            successes += 1;
        }
        proxy.next_transcript(WAIT).ok_or_else(|| missing("transcript"))?;
    }
    Ok(Report {
        scenario: Scenario::FlipConfirm.name().into(),
        trials: opts.trials,
        successes,
        details: json!({ "event": "client rejected the altered key confirmation" }),
    })
}

/// Outcome of one parameter-attack trial.
pub struct ParameterTrial {
    pub true_password_confirmed: bool,
    pub false_positives: usize,
    pub provider_accepted: bool,
    pub frames: usize,
}

/// A victim logs in through the weakening proxy to an insider provider; the
/// insider then runs [`dictionary_attack`] with its `(x, c)`.
pub struct ParameterAttackLab {
    pub insider: InsiderServer,
    pub proxy: MitmProxy,
    pub group: Arc<GroupParams>,
}

impl ParameterAttackLab {
    pub fn start(seed: u64) -> io::Result<Self> {
        let group = GroupProfile::Test256.params();
        let insider = InsiderServer::spawn(group.clone(), "insider.example", seed)?;
        let rule = TamperRule::WeakenParams { new_time_cost: WEAK_TIME_COST, new_mem_cost: WEAK_MEM_KIB };
        let proxy = MitmProxy::spawn(insider.addr(), rule)?;
        Ok(ParameterAttackLab { insider, proxy, group })
    }

    pub fn trial<R: Rng + rand::CryptoRng>(
        &self,
        index: usize,
        candidates: usize,
        unsealed: bool,
        rng: &mut R,
    ) -> io::Result<ParameterTrial> {
        let user = format!("victim{index}");
        let pw = random_password(rng);
        register(self.insider.addr(), &self.group, &user, &pw, &honest_memory_hard(rng), rng).map_err(io::Error::other)?;

        let cache = KeyCache::new();
        let conn = connect(self.proxy.addr())?;
        if unsealed {
            let mut conn = conn;
            let _ = broken::login_unsealed(&mut conn, &self.group, &user, &pw, &cache, rng);
        } else {
            let _ = client::login(conn, self.group.clone(), &user, Credential::Password { password: &pw, cache: &cache }, rng);
        }
        let session = self.insider.next_session(WAIT).ok_or_else(|| missing("insider session"))?;
        let mut transcript = self.proxy.next_transcript(WAIT).ok_or_else(|| missing("transcript"))?;
        transcript.attach_server_view(session.view);

        let mut dictionary: Vec<Vec<u8>> = (1..candidates.max(1)).map(|_| random_password(rng)).collect();
        dictionary.retain(|c| c != &pw);
        dictionary.push(pw.clone());
        dictionary.shuffle(rng);
        let view = transcript.server_view().expect("attached above").clone();
        let confirmed = dictionary_attack(&self.group, &transcript, &view, &dictionary);
        let hit = confirmed.iter().any(|c| c == &pw);
        Ok(ParameterTrial {
            true_password_confirmed: hit,
            false_positives: confirmed.len() - usize::from(hit),
            provider_accepted: session.accepted,
            frames: transcript.len(),
        })
    }
}

fn parameter_attack(opts: &Options, unsealed: bool) -> io::Result<Report> {
    let lab = ParameterAttackLab::start(opts.seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let (mut successes, mut false_positives, mut accepted) = (0, 0, 0);
    for i in 0..opts.trials {
        let t = lab.trial(i, opts.candidates, unsealed, &mut rng)?;
        successes += usize::from(t.true_password_confirmed);
        false_positives += t.false_positives;
        accepted += usize::from(t.provider_accepted);
    }
    let scenario = if unsealed { Scenario::ParameterAttackBroken } else { Scenario::ParameterAttack };
    Ok(Report {
        scenario: scenario.name().into(),
        trials: opts.trials,
        successes,
        details: json!({
            "event": "true password confirmed offline",
            "candidates_per_trial": opts.candidates,
            "false_positives": false_positives,
            "provider_accepted": accepted,
            "client_sealed_v": !unsealed,
        }),
    })
}

pub const STOLEN_VERIFIER_FINDING: &str = "A thief holding h can unblind X and blind Y, so it can compute sk. \
It cannot produce v = h^c: given g, g^c and h = g^pi that is a Diffie-Hellman problem, and neither c nor pi \
is in the stolen data. The provider therefore rejects every attempt. The stored verifier does still permit an \
offline dictionary search against h itself.";

/// Runs the stolen-verifier attack `trials` times plus the two controls.
pub fn stolen_verifier(opts: &Options) -> io::Result<Report> {
    let lab = Lab::start()?;
    let group = lab.group();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let pw = random_password(&mut rng);
    register(lab.addr(), &group, "victim", &pw, &test_kdf(rng.gen(), 3), &mut rng).map_err(io::Error::other)?;
    let record = lab.server.accounts().get("victim").ok_or_else(|| missing("account"))?;
    let stolen = StolenVerifier { username: "victim".into(), h: Some(record.h.clone()), p_pi: record.p_pi };

    let successes = (0..opts.trials).filter(|_| stolen_verifier_attack(&group, &stolen, lab.addr(), &mut rng)).count();
    let params_only = StolenVerifier { h: None, ..stolen.clone() };
    let params_only_successes =
        (0..opts.trials.min(10)).filter(|_| stolen_verifier_attack(&group, &params_only, lab.addr(), &mut rng)).count();

    // capture an honest M3 through a transparent proxy, then replay it
    let proxy = MitmProxy::spawn(lab.addr(), TamperRule::None)?;
    let cache = KeyCache::new();
    client::login(connect(proxy.addr())?, group.clone(), "victim", Credential::Password { password: &pw, cache: &cache }, &mut rng)
        .map_err(io::Error::other)?;
    let captured = proxy.next_transcript(WAIT).and_then(|t| t.handshake()).ok_or_else(|| missing("handshake"))?;
    let replay_successes = (0..opts.trials.min(10)).filter(|_| replay_response(lab.addr(), "victim", &captured.m3)).count();

    let stable = successes == 0 || successes == opts.trials;
    Ok(Report {
        scenario: Scenario::StolenVerifier.name().into(),
        trials: opts.trials,
        successes,
        details: json!({
            "event": "provider accepted a login made from (h, P_pi)",
            "stable": stable,
            "outcome": if successes == 0 { "rejected" } else if stable { "accepted" } else { "mixed" },
            "params_only_successes": params_only_successes,
            "replayed_m3_successes": replay_successes,
            "finding": STOLEN_VERIFIER_FINDING,
        }),
    })
}
