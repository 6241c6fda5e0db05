use std::fs;
use std::path::{Path, PathBuf};

use authstore_cli::{run, Cli, EXIT_AUTH, EXIT_OK, EXIT_USAGE};
use authstore_core::group::GroupProfile;
use authstore_core::stretch::KdfParams;
use authstore_server::{Server, ServerConfig, ServerHandle};

struct Env {
    dir: tempfile::TempDir,
    server: ServerHandle,
}

impl Env {
    fn new() -> Env {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ServerConfig::new(dir.path().join("server"));
        config.profile = GroupProfile::Test256;
        config.decoy_kdf = KdfParams::test_iterated([0; 16], 3).unwrap();
        config.admin_listen = Some("127.0.0.1:0".parse().unwrap());
        let server = Server::bind(config).unwrap().spawn();
        Env { dir, server }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn pwfile(&self, name: &str, lines: &[&str]) -> String {
        let p = self.path(name);
        fs::write(&p, lines.join("\n")).unwrap();
        p.display().to_string()
    }

    fn addr(&self) -> String {
        self.server.addr().to_string()
    }

    fn base_args(&self, vault: &str, pwfile: &str) -> Vec<String> {
        vec![
            "--group".into(),
            "test-256".into(),
            "--vault".into(),
            self.path(vault).display().to_string(),
            "--password-file".into(),
            pwfile.into(),
        ]
    }
}

fn exec(args: &[String], extra: &[&str]) -> (i32, String, String) {
    let mut all: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    all.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(&all, &mut &b""[..], &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn register_then_login() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["hunter2 but longer"]);
    let args = env.base_args("vault", &pw);
    let (code, out, err) = exec(&args, &["register", &env.addr(), "alice", "--test-kdf", "3"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("registered alice"));
    let (code, out, _) = exec(&args, &["login", &env.addr(), "alice"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim(), "OK");
}

#[test]
fn wrong_password_exits_one_after_three_frames() {
    let env = Env::new();
    let good = env.pwfile("good", &["right"]);
    assert_eq!(exec(&env.base_args("v", &good), &["register", &env.addr(), "bob", "--test-kdf", "2"]).0, EXIT_OK);
    let bad = env.pwfile("bad", &["wrong"]);
    let transcript = env.path("transcript.log");
    let mut args = env.base_args("v", &bad);
    args.extend(["--transcript".into(), transcript.display().to_string()]);
    let (code, _, err) = exec(&args, &["login", &env.addr(), "bob"]);
    assert_eq!(code, EXIT_AUTH);
    assert!(err.contains("authentication failed"), "{err}");
    let log = fs::read_to_string(&transcript).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3, "{log}");
    assert!(lines[0].starts_with("> ") && lines[1].starts_with("< ") && lines[2].starts_with("> "));
}

#[test]
fn reuse_base_registers_without_stretching() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["shared secret"]);
    let args = env.base_args("vault", &pw);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut cli = Cli::new(&mut out, &mut err);
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().map(|s| s.to_string()).chain(args.iter().cloned()).collect() };
    assert_eq!(cli.execute(&with(&["register", &env.addr(), "carol", "--test-kdf", "5"])), EXIT_OK);
    assert_eq!(cli.execute(&with(&["login", &env.addr(), "carol"])), EXIT_OK);
    let before = cli.kdf_evaluations();
    assert_eq!(cli.execute(&with(&["register", &env.addr(), "carol2", "--reuse-base"])), EXIT_OK);
    assert_eq!(cli.kdf_evaluations(), before);
    drop(cli);
    // the new account answers to the same password, under its own salt
    assert_eq!(exec(&args, &["login", &env.addr(), "carol2"]).0, EXIT_OK);
}

#[test]
fn reuse_base_without_login_is_a_usage_error() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["x"]);
    let (code, _, err) = exec(&env.base_args("v", &pw), &["register", &env.addr(), "dan", "--reuse-base"]);
    assert_eq!(code, EXIT_USAGE, "{err}");
}

#[test]
fn usage_errors() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["x"]);
    assert_eq!(exec(&[], &["frobnicate"]).0, EXIT_USAGE);
    std::env::remove_var(authstore_cli::SERVER_ENV);
    assert_eq!(exec(&env.base_args("v", &pw), &["login", "only-user"]).0, EXIT_USAGE);
    assert_eq!(exec(&env.base_args("v", &pw), &["reset", &env.addr(), "u", "--token", "zz"]).0, EXIT_USAGE);
}

#[test]
fn vault_round_trip_through_sync() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["one password"]);
    let a = env.base_args("laptop.avlt", &pw);
    let addr = env.addr();
    assert_eq!(exec(&a, &["register", &addr, "erin", "--test-kdf", "4"]).0, EXIT_OK);
    let secret = env.path("secret");
    fs::write(&secret, "mail-pass-123\n").unwrap();
    let secret = secret.display().to_string();
    let (code, _, err) = exec(&a, &["vault", "add", "mail.example", "erin", "--secret-file", &secret, "--test-kdf", "4"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, out, _) = exec(&a, &["vault", "list", "--json"]);
    assert_eq!(code, EXIT_OK);
    let listed: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(listed[0]["site"], "mail.example");
    assert!(!out.contains("mail-pass-123"));
    let (code, out, err) = exec(&a, &["vault", "sync", &addr, "erin"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("pushed version 1"));

    let b = env.base_args("phone.avlt", &pw);
    let (code, out, err) = exec(&b, &["vault", "sync", &addr, "erin"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("pulled version 1"));
    let (code, out, _) = exec(&b, &["vault", "get", "mail.example"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim(), "mail-pass-123");
    let (code, out, _) = exec(&b, &["vault", "list"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("SITE"));
    assert_eq!(exec(&b, &["vault", "sync", &addr, "erin"]).1.trim(), "up to date at version 1");
}

#[test]
fn passwd_rewraps_vault_without_touching_payload() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["old pass"]);
    let a = env.base_args("v.avlt", &pw);
    let addr = env.addr();
    assert_eq!(exec(&a, &["register", &addr, "fay", "--test-kdf", "3"]).0, EXIT_OK);
    let secret = env.path("s");
    fs::write(&secret, "s3").unwrap();
    assert_eq!(exec(&a, &["vault", "add", "x", "fay", "--secret-file", &secret.display().to_string()]).0, EXIT_OK);
    let before = authstore_core::vault::VaultDocument::read_file(&env.path("v.avlt")).unwrap();

    let both = env.pwfile("both", &["old pass", "new pass"]);
    let (code, out, err) = exec(&env.base_args("v.avlt", &both), &["passwd", &addr, "fay"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("vault rewrapped"));
    let after = authstore_core::vault::VaultDocument::read_file(&env.path("v.avlt")).unwrap();
    assert_ne!(before.data_params.wrapped_key, after.data_params.wrapped_key);

    assert_eq!(exec(&a, &["login", &addr, "fay"]).0, EXIT_AUTH);
    let new = env.pwfile("new", &["new pass"]);
    assert_eq!(exec(&env.base_args("v.avlt", &new), &["login", &addr, "fay"]).0, EXIT_OK);
    let (code, out, _) = exec(&env.base_args("v.avlt", &new), &["vault", "get", "x", "fay"]);
    assert_eq!((code, out.trim()), (EXIT_OK, "s3"));
}

#[test]
fn reset_flow_restores_login_not_data() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["forgotten"]);
    let a = env.base_args("v.avlt", &pw);
    let addr = env.addr();
    assert_eq!(exec(&a, &["register", &addr, "gus", "--test-kdf", "3"]).0, EXIT_OK);
    let secret = env.path("s");
    fs::write(&secret, "precious").unwrap();
    assert_eq!(exec(&a, &["vault", "add", "bank", "gus", "--secret-file", &secret.display().to_string()]).0, EXIT_OK);
    assert_eq!(exec(&a, &["vault", "sync", &addr, "gus"]).0, EXIT_OK);

    let token = env.server.issue_reset("gus").unwrap();
    let fresh = env.pwfile("fresh", &["brand new"]);
    let r = env.base_args("new-device.avlt", &fresh);
    let (code, _, err) = exec(&r, &["reset", &addr, "gus", "--token", &token, "--test-kdf", "3"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(err.contains("cannot be recovered"));
    assert_ne!(exec(&r, &["reset", &addr, "gus", "--token", &token]).0, EXIT_OK);
    assert_eq!(exec(&r, &["login", &addr, "gus"]).0, EXIT_OK);
    // the stored vault is still sealed under the old password
    assert_eq!(exec(&r, &["vault", "sync", &addr, "gus"]).0, EXIT_OK);
    assert_eq!(exec(&r, &["vault", "get", "bank", "gus"]).0, EXIT_AUTH);
}

#[test]
fn shell_mode_runs_commands_in_one_process() {
    let env = Env::new();
    let pw = env.pwfile("pw", &["shell pw"]);
    let addr = env.addr();
    let script = format!(
        "register {addr} hal --test-kdf 3\nlogin {addr} hal\n# comment\nregister {addr} hal2 --reuse-base\nlogin {addr} hal2\nexit\n"
    );
    let mut args = env.base_args("v", &pw);
    args.extend(["--kdf-stats".into(), "shell".into()]);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(&args, &mut script.as_bytes(), &mut out, &mut err);
    let err = String::from_utf8(err).unwrap();
    assert_eq!(code, EXIT_OK, "{err}");
    let counts: Vec<&str> = err.lines().filter(|l| l.starts_with("kdf evaluations")).collect();
    assert_eq!(counts, vec!["kdf evaluations: 1"; 4]);
}

fn scan_dir(dir: &Path, needles: &[&[u8]]) -> Vec<PathBuf> {
    let mut hits = Vec::new();
    for entry in walk(dir) {
        let bytes = fs::read(&entry).unwrap();
        if needles.iter().any(|n| bytes.windows(n.len()).any(|w| w == *n)) {
            hits.push(entry);
        }
    }
    hits
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn no_password_material_on_disk() {
    let env = Env::new();
    let password = "SENTINEL-PW-93be";
    let pw = env.pwfile("pw", &[password]);
    let state = env.path("state");
    fs::create_dir(&state).unwrap();
    let mut a = env.base_args("state/v.avlt", &pw);
    a.extend(["--transcript".into(), state.join("t.log").display().to_string()]);
    let addr = env.addr();
    assert_eq!(exec(&a, &["register", &addr, "ivy", "--test-kdf", "3"]).0, EXIT_OK);
    assert_eq!(exec(&a, &["login", &addr, "ivy"]).0, EXIT_OK);
    let secret = env.path("s");
    fs::write(&secret, "x").unwrap();
    assert_eq!(exec(&a, &["vault", "add", "s", "ivy", "--secret-file", &secret.display().to_string()]).0, EXIT_OK);
    assert_eq!(exec(&a, &["vault", "sync", &addr, "ivy"]).0, EXIT_OK);
    let hex_pw = hex::encode(password);
    let hits = scan_dir(&state, &[password.as_bytes(), hex_pw.as_bytes()]);
    assert!(hits.is_empty(), "{hits:?}");
    let hits = scan_dir(&env.path("server"), &[password.as_bytes(), hex_pw.as_bytes()]);
    assert!(hits.is_empty(), "{hits:?}");
}
