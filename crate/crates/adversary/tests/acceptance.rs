//! End-to-end acceptance run. Prints one PASS or FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use authstore_adversary::scenarios::{self, Options, ParameterAttackLab};
use authstore_core::account::ResetToken;
use authstore_core::client::{self, ClientError, Credential, Session};
use authstore_core::crypto;
use authstore_core::group::{GroupParams, GroupProfile};
use authstore_core::pake::{
    client_start, open_confirmation_value, ClientState, ServerSession, ServerState, Verifier, VerifierKind,
};
use authstore_core::stretch::{derive_base_key, derive_user_key, KdfParams, KeyCache, UserKeyParams};
use authstore_core::vault::{CredentialRecord, VaultDocument, VaultError};
use authstore_core::wire::{Direction, ErrorCode, FrameLog, FramedStream};
use authstore_server::{request_reset_token, Server, ServerConfig, ServerHandle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Secrets whose bytes must never appear in any artifact.
#[derive(Default)]
struct Needles {
    passwords: Vec<Vec<u8>>,
    base_keys: Vec<Vec<u8>>,
    data_keys: Vec<Vec<u8>>,
    session_keys: Vec<Vec<u8>>,
}

struct Ctx {
    /// Every artifact the run produces lives here and is scanned at the end.
    root: tempfile::TempDir,
    /// Password files and other inputs the client is given; not scanned.
    inputs: tempfile::TempDir,
    server: Option<ServerHandle>,
    group: Arc<GroupParams>,
    needles: Needles,
    rng: ChaCha20Rng,
}

impl Ctx {
    fn new() -> Ctx {
        let root = tempfile::tempdir().unwrap();
        let mut config = ServerConfig::new(root.path().join("server"));
        config.profile = GroupProfile::Test256;
        config.admin_listen = Some("127.0.0.1:0".parse().unwrap());
        config.rate_limit = u32::MAX;
        config.decoy_kdf = kdf([0; 16]);
        config.wire_log = Some(root.path().join("server-wire.log"));
        let server = Server::bind(config).unwrap().spawn();
        Ctx {
            root,
            inputs: tempfile::tempdir().unwrap(),
            group: server.group(),
            server: Some(server),
            needles: Needles::default(),
            rng: ChaCha20Rng::seed_from_u64(2024),
        }
    }

    fn server(&self) -> &ServerHandle {
        self.server.as_ref().expect("server is running")
    }

    fn connect(&self) -> FramedStream<TcpStream> {
        FramedStream::new(TcpStream::connect(self.server().addr()).unwrap())
    }

    fn sentinel_password(&mut self, tag: &str) -> Vec<u8> {
        let pw = format!("SENTINEL-{tag}-{:016x}", self.rng.gen::<u64>()).into_bytes();
        self.needles.passwords.push(pw.clone());
        pw
    }

    fn register(&mut self, user: &str, pw: &[u8]) {
        let kdf = kdf(self.rng.gen());
        let (p_pi, _, h) = client::make_verifier(&self.group, pw, &kdf, &KeyCache::new(), &mut self.rng).unwrap();
        self.needles.base_keys.push(derive_base_key(&kdf, pw).unwrap().as_bytes().to_vec());
        client::register(&mut self.connect(), user, p_pi, h).unwrap();
    }

    fn login(&mut self, user: &str, pw: &[u8]) -> Result<Session<TcpStream>, ClientError> {
        let cache = KeyCache::new();
        let s = client::login(
            self.connect(),
            self.group.clone(),
            user,
            Credential::Password { password: pw, cache: &cache },
            &mut self.rng,
        )?;
        self.needles.session_keys.push(s.session_key().as_bytes().to_vec());
        Ok(s)
    }

    fn new_credentials(&mut self, pw: &[u8]) -> (UserKeyParams, Vec<u8>) {
        let kdf = kdf(self.rng.gen());
        self.needles.base_keys.push(derive_base_key(&kdf, pw).unwrap().as_bytes().to_vec());
        let (p_pi, _, h) = client::make_verifier(&self.group, pw, &kdf, &KeyCache::new(), &mut self.rng).unwrap();
        (p_pi, h)
    }

    /// Records `k_sym` of a vault so the scan can look for it.
    fn note_vault_key(&mut self, doc: &VaultDocument, pw: &[u8]) {
        let dp = &doc.data_params;
        let base = derive_base_key(&dp.u_params.base, pw).unwrap();
        self.needles.base_keys.push(base.as_bytes().to_vec());
        let k_data = derive_user_key(&base, &dp.u_params.user_salt);
        let mut aad = b"AVLT\x01".to_vec();
        aad.extend_from_slice(&dp.u_params.encode());
        aad.extend_from_slice(&dp.wrap_nonce);
        let k_sym = crypto::open(k_data.as_bytes(), &dp.wrap_nonce, &aad, &dp.wrapped_key).unwrap();
        self.needles.data_keys.push(k_sym);
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }
}

fn kdf(salt: [u8; 16]) -> KdfParams {
    KdfParams::test_iterated(salt, 2).unwrap()
}

fn random_password(rng: &mut ChaCha20Rng) -> Vec<u8> {
    scenarios::random_password(rng)
}

fn honest_run(group: &Arc<GroupParams>, user: &str, registered: &[u8], typed: &[u8], kdf: KdfParams, rng: &mut ChaCha20Rng) -> (bool, bool) {
    let cache = KeyCache::new();
    let (p_pi, _, h) = client::make_verifier(group, registered, &kdf, &cache, rng).unwrap();
    let verifier = Verifier { username: user.into(), p_pi, h: group.validate_element(&h).unwrap(), kind: VerifierKind::Password };
    let (m1, mut client) = client_start(group.clone(), user).unwrap();
    let (m2, mut server) = ServerSession::start(group.clone(), "provider.test", &m1, &verifier, rng).unwrap();
    let m3 = client.on_challenge(&m2, typed, &KeyCache::new(), rng).unwrap();
    let Ok(m4) = server.on_response(&m3) else {
        return (false, server.grant().is_some());
    };
    let sk = client.on_confirm(&m4).ok();
    let agreed = sk.as_ref().map(|k| k.as_bytes()) == server.session_key().map(|k| k.as_bytes())
        && client.state() == ClientState::Established
        && server.state() == ServerState::Done;
    (agreed, server.grant().is_some())
}

fn c1_completeness(_: &mut Ctx) -> Verdict {
    let group = GroupProfile::Test256.params();
    let start = Instant::now();
    let mut agreed = 0;
    for i in 0..1000u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(10_000 + i);
        let pw = random_password(&mut rng);
        let params = KdfParams::test_iterated(rng.gen(), rng.gen_range(1..=16)).unwrap();
        let user = format!("u{}", rng.gen::<u32>());
        agreed += usize::from(honest_run(&group, &user, &pw, &pw, params, &mut rng).0);
    }
    let secs = start.elapsed().as_secs_f64();
    check(agreed == 1000 && secs < 30.0, format!("{agreed}/1000 established with equal sk in {secs:.2} s (limit 30 s)"))
}

fn c2_soundness(_: &mut Ctx) -> Verdict {
    let group = GroupProfile::Test256.params();
    let mut accepts = 0;
    for i in 0..1000u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(20_000 + i);
        let pw = random_password(&mut rng);
        let mut wrong = random_password(&mut rng);
        if wrong == pw {
            wrong.push(b'!');
        }
        let params = KdfParams::test_iterated(rng.gen(), rng.gen_range(1..=16)).unwrap();
        accepts += usize::from(honest_run(&group, "victim", &pw, &wrong, params, &mut rng).1);
    }
    check(accepts == 0, format!("{accepts}/1000 server accepts with a wrong password"))
}

fn c3_message_count(ctx: &mut Ctx) -> Verdict {
    let pw = ctx.sentinel_password("count");
    ctx.register("counter", &pw);
    let mut counts = Vec::new();
    for i in 0..20 {
        let log = FrameLog::new();
        let framed = FramedStream::with_log(TcpStream::connect(ctx.server().addr()).unwrap(), log.clone());
        let cache = KeyCache::new();
        let s = client::login(framed, ctx.group.clone(), "counter", Credential::Password { password: &pw, cache: &cache }, &mut ctx.rng)
            .map_err(|e| format!("login failed: {e}"))?;
        ctx.needles.session_keys.push(s.session_key().as_bytes().to_vec());
        drop(s);
        let frames = log.frames();
        let shape: Vec<(Direction, u8)> = frames.iter().map(|(d, f)| (*d, f[4])).collect();
        let expected =
            vec![(Direction::Sent, 0x01), (Direction::Received, 0x02), (Direction::Sent, 0x03), (Direction::Received, 0x04)];
        if shape != expected {
            return Err(format!("login {i} exchanged {shape:?}"));
        }
        let dump: String = frames
            .iter()
            .map(|(d, f)| format!("{} {}\n", if *d == Direction::Sent { ">" } else { "<" }, hex::encode(f)))
            .collect();
        fs::write(ctx.path(&format!("capture-{i}.hex")), dump).unwrap();
        counts.push(frames.len());
    }
    let all_four = counts.iter().all(|&n| n == 4);
    check(all_four, format!("20/20 logins used {} frames, P_pi carried in M2 (fewer than 6)", counts[0]))
}

fn c4_toy_identity(_: &mut Ctx) -> Verdict {
    let group = GroupProfile::Toy.params();
    let pi = group.scalar_from_u64(3).unwrap();
    let c = group.scalar_from_u64(2).unwrap();
    let h = group.exp_gen(&pi);
    let params = UserKeyParams::new(kdf([0; 16]), [0; 16]);
    let verifier = Verifier { username: "toy".into(), p_pi: params, h: h.clone(), kind: VerifierKind::Password };
    let (m1, mut client) = client_start(group.clone(), "toy").unwrap();
    let x = group.scalar_from_u64(5).unwrap();
    let (m2, mut server) = ServerSession::start_with_ephemerals(group.clone(), "toy-provider", &m1, &verifier, x, c.clone()).unwrap();
    let m3 = client.on_challenge_with_ephemeral(&m2, &pi, &group.scalar_from_u64(7).unwrap()).unwrap();
    let sk = client.session_key().unwrap().clone();
    let v = group.validate_element(&open_confirmation_value(&sk, &m3.enc_v).unwrap()).unwrap();
    let h_c = group.exp(&h, &c);
    let accepted = server.on_response(&m3).is_ok();
    let (v, h_c, h) = (v.value().to_string(), h_c.value().to_string(), h.value().to_string());
    check(
        v == h_c && v == "2" && h == "18" && accepted,
        format!("h = {h}, v = {v}, h^c = {h_c}, server accepted: {accepted}"),
    )
}

fn c5_parameter_attack(_: &mut Ctx) -> Verdict {
    const TRIALS: usize = 20;
    const CANDIDATES: usize = 1000;
    let mut rng = ChaCha20Rng::seed_from_u64(55);
    let lab = ParameterAttackLab::start(55).map_err(|e| e.to_string())?;
    let mut rates = [0usize; 2];
    let mut false_positives = 0;
    for (mode, unsealed) in [false, true].into_iter().enumerate() {
        for i in 0..TRIALS {
            let t = lab.trial(mode * TRIALS + i, CANDIDATES, unsealed, &mut rng).map_err(|e| e.to_string())?;
            rates[mode] += usize::from(t.true_password_confirmed);
            false_positives += t.false_positives;
        }
    }
    let pct = |n: usize| 100.0 * n as f64 / TRIALS as f64;
    check(
        rates == [0, TRIALS] && false_positives == 0,
        format!(
            "confirmation rate sealed {:.0}%, unsealed {:.0}% ({TRIALS} trials x {CANDIDATES} candidates, {false_positives} false positives)",
            pct(rates[0]),
            pct(rates[1])
        ),
    )
}

fn c6_rewrap(ctx: &mut Ctx) -> Verdict {
    let cache = KeyCache::new();
    let (old_kdf, new_kdf) = (kdf([3; 16]), kdf([4; 16]));
    let doc = VaultDocument::create(b"old password", &old_kdf, &cache, &mut ctx.rng).unwrap();
    let mut handle = doc.open(b"old password", &cache).unwrap();
    let bulk: Vec<u8> = (0..10 * 1024 * 1024).map(|_| ctx.rng.gen()).collect();
    handle.add(CredentialRecord::web_password("bulk.example", "me", &bulk)).unwrap();
    let doc = handle.document(&mut ctx.rng);
    // derive both base keys first so only the rewrap is timed
    cache.base_key(&new_kdf, b"new password").unwrap();
    let start = Instant::now();
    let rewrapped = doc.change_password(b"old password", b"new password", &new_kdf, &cache, &mut ctx.rng).unwrap();
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    let same_payload = rewrapped.payload == doc.payload && rewrapped.payload_nonce == doc.payload_nonce;
    let new_wrap = rewrapped.data_params.wrapped_key != doc.data_params.wrapped_key;
    let opens = rewrapped.open(b"new password", &cache).map(|h| h.len() == 1).unwrap_or(false);
    check(
        same_payload && new_wrap && opens && ms < 50.0,
        format!("payload identical: {same_payload}, wrapped key changed: {new_wrap}, {:.1} MiB in {ms:.2} ms (limit 50 ms)", doc.payload.len() as f64 / 1048576.0),
    )
}

fn c7_credential_update(ctx: &mut Ctx) -> Verdict {
    let old = ctx.sentinel_password("old");
    let new = ctx.sentinel_password("new");
    ctx.register("updater", &old);
    let mut s = ctx.login("updater", &old).map_err(|e| e.to_string())?;
    let (p_pi, h) = ctx.new_credentials(&new);
    s.change_credentials(p_pi, h).map_err(|e| e.to_string())?;
    drop(s);
    let old_ok = (0..100).filter(|_| ctx.login("updater", &old).is_ok()).count();
    let new_ok = (0..100).filter(|_| ctx.login("updater", &new).is_ok()).count();
    check(old_ok == 0 && new_ok == 100, format!("old password {old_ok}/100, new password {new_ok}/100"))
}

fn c8_reset(ctx: &mut Ctx) -> Verdict {
    let forgotten = ctx.sentinel_password("forgotten");
    let fresh = ctx.sentinel_password("fresh");
    ctx.register("forgetful", &forgotten);
    let cache = KeyCache::new();
    let mut vault = VaultDocument::create(&forgotten, &kdf(ctx.rng.gen()), &cache, &mut ctx.rng).unwrap().open(&forgotten, &cache).unwrap();
    vault.add(CredentialRecord::web_password("bank.example", "me", b"vault-secret")).unwrap();
    let doc = vault.document(&mut ctx.rng);
    ctx.note_vault_key(&doc, &forgotten);
    ctx.login("forgetful", &forgotten).unwrap().put_blob(1, doc.encode()).unwrap();

    let token_hex = request_reset_token(ctx.server().admin_addr().unwrap(), "forgetful").map_err(|e| e.to_string())?;
    let token = ResetToken::from_hex(&ctx.group, &token_hex).ok_or("unparseable token")?;
    let reset_login = |ctx: &mut Ctx| {
        client::login(ctx.connect(), ctx.group.clone(), "forgetful", Credential::ResetToken(token.scalar()), &mut ctx.rng)
    };
    let mut s = reset_login(ctx).map_err(|e| format!("first token use failed: {e}"))?;
    let forced = matches!(s.get_blob(), Err(ClientError::Server(ErrorCode::NotPermitted)))
        && matches!(s.put_blob(2, vec![0]), Err(ClientError::Server(ErrorCode::NotPermitted)));
    let (p_pi, h) = ctx.new_credentials(&fresh);
    s.change_credentials(p_pi, h).map_err(|e| e.to_string())?;
    drop(s);
    let second_use = reset_login(ctx).is_ok();
    let fresh_ok = ctx.login("forgetful", &fresh).is_ok();
    let forgotten_ok = ctx.login("forgetful", &forgotten).is_ok();
    let (_, blob) = ctx.login("forgetful", &fresh).unwrap().get_blob().unwrap();
    let restored = match VaultDocument::decode(&blob) {
        Ok(doc) => !matches!(doc.open(&fresh, &KeyCache::new()), Err(VaultError::VaultLocked)),
        Err(_) => false,
    };
    check(
        !second_use && forced && fresh_ok && !forgotten_ok && !restored,
        format!(
            "token reuse accepted: {second_use}, change forced: {forced}, new password works: {fresh_ok}, \
             old password works: {forgotten_ok}, vault opens with new password: {restored}"
        ),
    )
}

fn cli(ctx: &Ctx, vault: &str, pwfile: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    args.extend([
        "--group".into(),
        "test-256".into(),
        "--vault".into(),
        ctx.path(vault).display().to_string(),
        "--password-file".into(),
        pwfile.display().to_string(),
        "--transcript".into(),
        ctx.path("cli-transcript.log").display().to_string(),
    ]);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = authstore_cli::run(&args, &mut &b""[..], &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

const E2E_SECRET: &str = "webmail-secret-42";

fn c10_single_password(ctx: &mut Ctx) -> Verdict {
    let pw = ctx.sentinel_password("single");
    let pwfile = ctx.inputs.path().join("single.pw");
    fs::write(&pwfile, &pw).unwrap();
    let secret = ctx.inputs.path().join("secret");
    fs::write(&secret, E2E_SECRET).unwrap();
    let addr = ctx.server().addr().to_string();
    let secret = secret.display().to_string();
    let steps: [(&str, Vec<&str>); 6] = [
        ("laptop.avlt", vec!["register", &addr, "walker", "--test-kdf", "3"]),
        ("laptop.avlt", vec!["login", &addr, "walker"]),
        ("laptop.avlt", vec!["vault", "add", "mail.example", "walker", "--secret-file", &secret]),
        ("laptop.avlt", vec!["vault", "sync", &addr, "walker"]),
        ("phone.avlt", vec!["login", &addr, "walker"]),
        ("phone.avlt", vec!["vault", "sync", &addr, "walker"]),
    ];
    for (vault, args) in &steps {
        let (code, _, err) = cli(ctx, vault, &pwfile, args);
        if code != 0 {
            return Err(format!("`{}` exited {code}: {}", args.join(" "), err.trim()));
        }
    }
    let (code, out, _) = cli(ctx, "phone.avlt", &pwfile, &["vault", "get", "mail.example", "walker"]);
    let doc = VaultDocument::read_file(&ctx.path("phone.avlt")).unwrap();
    ctx.note_vault_key(&doc, &pw);
    let record = ctx.server().accounts().get("walker").unwrap();
    ctx.needles.base_keys.push(derive_base_key(&record.p_pi.base, &pw).unwrap().as_bytes().to_vec());
    check(
        code == 0 && out.trim() == E2E_SECRET,
        format!("register, login, add, sync, fresh device login and sync, get returned {:?} (exit {code})", out.trim()),
    )
}

fn c11_loss_resilience(ctx: &mut Ctx) -> Verdict {
    let pwfile = ctx.inputs.path().join("single.pw");
    if !pwfile.exists() {
        return Err("requires the single-password scenario".into());
    }
    for name in ["laptop.avlt", "laptop.avlt.sync", "phone.avlt", "phone.avlt.sync"] {
        let _ = fs::remove_file(ctx.path(name));
    }
    let (code, out, err) = cli(ctx, "laptop.avlt", &pwfile, &["login", &ctx.server().addr().to_string(), "walker"]);
    let vault_gone = !ctx.path("laptop.avlt").exists() && !ctx.path("phone.avlt").exists();
    check(
        code == 0 && out.trim() == "OK" && vault_gone,
        format!("with every local vault deleted, login exited {code} ({}{})", out.trim(), err.trim()),
    )
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap().flatten() {
        let path = entry.path();
        if path.is_dir() {
            files_under(&path, out);
        } else {
            out.push(path);
        }
    }
}

fn c9_sentinel_scan(ctx: &mut Ctx) -> Verdict {
    // stopping the server flushes the wire log
    if let Some(server) = ctx.server.take() {
        server.shutdown();
    }
    let n = &ctx.needles;
    let categories = [("password", &n.passwords), ("base key", &n.base_keys), ("k_sym", &n.data_keys), ("sk", &n.session_keys)];
    if categories.iter().any(|(_, v)| v.is_empty()) {
        return Err("a needle category is empty".into());
    }
    // the scanner must see a planted secret, raw or hex
    let canary = &n.passwords[0];
    let planted = [b"prefix".as_slice(), canary, hex::encode(canary).as_bytes()].concat();
    if !contains(&planted, canary) || !contains(&planted[6 + canary.len()..], hex::encode(canary).as_bytes()) {
        return Err("scanner missed a planted secret".into());
    }
    let mut files = Vec::new();
    files_under(ctx.root.path(), &mut files);
    let has_wire = files.iter().any(|f| f.ends_with("server-wire.log")) && files.iter().any(|f| f.ends_with("cli-transcript.log"));
    let has_vault = files.iter().any(|f| f.extension().is_some_and(|e| e == "avlt")) || files.iter().any(|f| f.to_string_lossy().contains("blobs"));
    let mut hits = Vec::new();
    let mut bytes_scanned = 0;
    for file in &files {
        let bytes = fs::read(file).unwrap();
        bytes_scanned += bytes.len();
        for (name, list) in &categories {
            for needle in list.iter() {
                if contains(&bytes, needle) || contains(&bytes, hex::encode(needle).as_bytes()) {
                    hits.push(format!("{name} in {}", file.display()));
                }
            }
        }
    }
    let total: usize = categories.iter().map(|(_, v)| v.len()).sum();
    check(
        hits.is_empty() && has_wire && has_vault,
        format!(
            "{} hits for {total} secrets ({} passwords, {} base keys, {} k_sym, {} sk) across {} files, {bytes_scanned} bytes{}",
            hits.len(),
            n.passwords.len(),
            n.base_keys.len(),
            n.data_keys.len(),
            n.session_keys.len(),
            files.len(),
            hits.first().map(|h| format!("; first: {h}")).unwrap_or_default()
        ),
    )
}

fn c12_stolen_verifier(_: &mut Ctx) -> Verdict {
    let report = scenarios::stolen_verifier(&Options { trials: 100, candidates: 0, seed: 12 }).map_err(|e| e.to_string())?;
    let stable = report.details["stable"].as_bool() == Some(true);
    check(
        stable && report.trials == 100,
        format!(
            "outcome {} in {}/{} impersonations accepted, stable: {stable}; {}",
            report.details["outcome"], report.successes, report.trials, scenarios::STOLEN_VERIFIER_FINDING
        ),
    )
}

fn main() -> ExitCode {
    let mut ctx = Ctx::new();
    type Criterion = fn(&mut Ctx) -> Verdict;
    let criteria: [(u8, &str, Criterion); 12] = [
        (1, "protocol completeness", c1_completeness),
        (2, "protocol soundness", c2_soundness),
        (3, "message count", c3_message_count),
        (4, "correctness identity", c4_toy_identity),
        (5, "parameter attack resistance", c5_parameter_attack),
        (6, "key-chain rewrap", c6_rewrap),
        (7, "credential update", c7_credential_update),
        (8, "account reset", c8_reset),
        (10, "single-password end-to-end", c10_single_password),
        (11, "loss resilience", c11_loss_resilience),
        (12, "stolen-verifier scenario", c12_stolen_verifier),
        // runs last so it scans everything the others wrote
        (9, "secrecy hygiene", c9_sentinel_scan),
    ];
    let mut lines = Vec::new();
    let mut failed = 0;
    for (n, name, f) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let line = format!("criterion {n:>2} {tag} {name}: {detail}");
        println!("{line}");
        lines.push((n, line));
    }
    lines.sort_by_key(|(n, _)| *n);
    println!("\nsummary:");
    for (_, line) in &lines {
        println!("  {}", line.split(':').next().unwrap_or(line));
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
