//! The `authstore` client: registration, login, password change, reset and
//! a local credential vault kept in sync through the server.
//!
//! One password drives both authentication and vault encryption. The vault
//! is created with the same base-key parameters as the login, so once the
//! base key is cached, unlocking the vault costs no further stretching.
//! `shell` keeps that cache alive across commands; nothing derived from the
//! password is ever written to disk.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use authstore_core::account::{canonicalize_username, write_atomic, ResetToken};
use authstore_core::client::{self, ClientError, Credential, Session};
use authstore_core::crypto::labeled_hash;
use authstore_core::group::{GroupParams, GroupProfile};
use authstore_core::stretch::{
    derive_user_key, to_auth_scalar, BaseKey, KdfAlgorithm, KdfParams, KeyCache, UserKeyParams, DEFAULT_MEM_KIB,
    DEFAULT_PARALLELISM, DEFAULT_PASSES,
};
use authstore_core::vault::{CredentialRecord, RecordKind, VaultDocument, VaultError, VaultHandle};
use authstore_core::wire::{Direction, ErrorCode, FrameLog, FramedStream};
use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::RngCore;
use zeroize::Zeroizing;

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUTH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const SERVER_ENV: &str = "AUTHSTORE_SERVER";
const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Parser, Debug)]
#[command(name = "authstore", about = "Password-authenticated account and vault client", version)]
pub struct CliArgs {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalOpts {
    /// Vault file (default: the per-user config directory).
    #[arg(long, global = true)]
    pub vault: Option<PathBuf>,
    /// Group profile; must match the server.
    #[arg(long, global = true)]
    pub group: Option<GroupProfile>,
    /// UNSAFE, for tests only: read passwords from this file, one per prompt.
    #[arg(long, global = true)]
    pub password_file: Option<PathBuf>,
    /// Append every frame exchanged with the server to this file as hex.
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
    /// Print the number of key-stretching evaluations after each command.
    #[arg(long, global = true)]
    pub kdf_stats: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct KdfOpts {
    /// Memory cost of the memory-hard KDF in KiB.
    #[arg(long)]
    pub mem_kib: Option<u32>,
    /// Passes of the memory-hard KDF.
    #[arg(long)]
    pub passes: Option<u32>,
    #[arg(long)]
    pub parallelism: Option<u32>,
    /// Use the fast iterated-hash KDF with this many rounds (testing only).
    #[arg(long, conflicts_with_all = ["mem_kib", "passes", "parallelism"])]
    pub test_kdf: Option<u32>,
}

impl KdfOpts {
    fn is_set(&self) -> bool {
        self.mem_kib.is_some() || self.passes.is_some() || self.parallelism.is_some() || self.test_kdf.is_some()
    }

    /// Requested parameters with a fresh salt; `like` supplies unset costs.
    fn params(&self, like: Option<&KdfParams>) -> Result<KdfParams, CliError> {
        let mut salt = [0u8; 16];
        OsRng.fill_bytes(&mut salt);
        let params = if let Some(rounds) = self.test_kdf {
            KdfParams::test_iterated(salt, rounds)
        } else if let (false, Some(like)) = (self.is_set(), like) {
            Ok(KdfParams { salt, ..*like })
        } else {
            let base = like.filter(|p| p.algorithm == KdfAlgorithm::MemoryHard);
            KdfParams::memory_hard(
                salt,
                self.mem_kib.or(base.map(|p| p.mem_cost)).unwrap_or(DEFAULT_MEM_KIB),
                self.passes.or(base.map(|p| p.time_cost)).unwrap_or(DEFAULT_PASSES),
                self.parallelism.or(base.map(|p| p.parallelism)).unwrap_or(DEFAULT_PARALLELISM),
            )
        };
        params.map_err(|e| CliError::Usage(format!("invalid KDF parameters: {e}")))
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create an account: register [SERVER] USERNAME
    Register {
        #[arg(num_args = 1..=2, value_names = ["SERVER", "USERNAME"])]
        target: Vec<String>,
        #[command(flatten)]
        kdf: KdfOpts,
        /// Reuse the base key cached by an earlier login in this process
        /// with a fresh user salt; no password prompt.
        #[arg(long, conflicts_with_all = ["mem_kib", "passes", "parallelism", "test_kdf"])]
        reuse_base: bool,
    },
    /// Authenticate: login [SERVER] USERNAME
    Login {
        #[arg(num_args = 1..=2, value_names = ["SERVER", "USERNAME"])]
        target: Vec<String>,
    },
    /// Change the password and rewrap the vault: passwd [SERVER] USERNAME
    Passwd {
        #[arg(num_args = 1..=2, value_names = ["SERVER", "USERNAME"])]
        target: Vec<String>,
        #[command(flatten)]
        kdf: KdfOpts,
    },
    /// Recover login with an operator-issued token, then set a new password.
    Reset {
        #[arg(num_args = 1..=2, value_names = ["SERVER", "USERNAME"])]
        target: Vec<String>,
        #[arg(long)]
        token: String,
        #[command(flatten)]
        kdf: KdfOpts,
    },
    /// Local credential vault.
    Vault {
        #[command(subcommand)]
        action: VaultCommand,
    },
    /// Read commands from standard input and run them in one process.
    Shell,
}

#[derive(Subcommand, Debug)]
pub enum VaultCommand {
    /// Store a web password.
    Add {
        site: String,
        login: String,
        /// Read the secret from this file instead of prompting.
        #[arg(long)]
        secret_file: Option<PathBuf>,
        #[command(flatten)]
        kdf: KdfOpts,
    },
    /// Print a stored secret.
    Get { site: String, login: Option<String> },
    /// List records without secrets.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Delete a record.
    Remove { site: String, login: String },
    /// Push or pull the vault: vault sync [SERVER] USERNAME
    Sync {
        #[arg(num_args = 1..=2, value_names = ["SERVER", "USERNAME"])]
        target: Vec<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Auth(String),
    Usage(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Auth(_) => EXIT_AUTH,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Auth(m) | CliError::Usage(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            e if e.is_auth_failure() => CliError::Auth("authentication failed".into()),
            ClientError::Server(ErrorCode::RateLimited) => CliError::Auth("too many failed attempts; try again later".into()),
            ClientError::Server(ErrorCode::UserExists) => CliError::Failed("username already registered".into()),
            ClientError::Server(ErrorCode::InvalidUsername) | ClientError::Pake(authstore_core::pake::PakeError::InvalidUsername) => {
                CliError::Usage("invalid username".into())
            }
            ClientError::Server(ErrorCode::NotPermitted) => CliError::Failed("not permitted until the password is changed".into()),
            ClientError::Server(code) => CliError::Failed(format!("server error {code:?}")),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<VaultError> for CliError {
    fn from(e: VaultError) -> Self {
        match e {
            VaultError::VaultLocked => CliError::Auth("vault locked: wrong password".into()),
            VaultError::NotFound => CliError::Failed("no such record".into()),
            VaultError::DuplicateRecord => CliError::Failed("record already exists".into()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Client state for one process.
pub struct Cli<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    defaults: GlobalOpts,
    opts: GlobalOpts,
    cache: KeyCache,
    /// Base key of the last successful login or registration, memory only.
    last_base: Option<(KdfParams, BaseKey)>,
    session: Option<(String, String, Session<TcpStream>)>,
    password_lines: Option<(Vec<Zeroizing<String>>, usize)>,
}

impl<'a> Cli<'a> {
    pub fn new(out: &'a mut dyn Write, err: &'a mut dyn Write) -> Self {
        Cli {
            out,
            err,
            defaults: GlobalOpts::default(),
            opts: GlobalOpts::default(),
            cache: KeyCache::new(),
            last_base: None,
            session: None,
            password_lines: None,
        }
    }

    /// Key-stretching evaluations performed so far.
    pub fn kdf_evaluations(&self) -> u64 {
        self.cache.derivations()
    }

    /// Runs one command line (without the program name). Returns the exit code.
    pub fn execute<S: AsRef<str>>(&mut self, args: &[S]) -> i32 {
        let argv = std::iter::once("authstore").chain(args.iter().map(|a| a.as_ref()));
        let parsed = match CliArgs::try_parse_from(argv) {
            Ok(p) => p,
            Err(e) => {
                let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
                let _ = write!(self.err, "{e}");
                return code;
            }
        };
        self.run_parsed(parsed, None)
    }

    fn run_parsed(&mut self, parsed: CliArgs, stdin: Option<&mut dyn BufRead>) -> i32 {
        self.opts = merge(&parsed.global, &self.defaults);
        let result = match parsed.command {
            Command::Shell => match stdin {
                Some(input) => return self.shell(parsed.global, input),
                None => Err(CliError::Usage("shell cannot be nested".into())),
            },
            cmd => self.dispatch(cmd),
        };
        let code = match result {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(self.err, "error: {}", e.message());
                e.code()
            }
        };
        if self.opts.kdf_stats {
            let _ = writeln!(self.err, "kdf evaluations: {}", self.cache.derivations());
        }
        code
    }

    fn shell(&mut self, global: GlobalOpts, input: &mut dyn BufRead) -> i32 {
        self.defaults = global;
        let mut last = EXIT_OK;
        let mut line = String::new();
        loop {
            line.clear();
            match input.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => {}
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                [] => continue,
                [first, ..] if first.starts_with('#') => continue,
                ["exit"] | ["quit"] => break,
                _ => {}
            }
            let argv = std::iter::once("authstore").chain(words.iter().copied());
            last = match CliArgs::try_parse_from(argv) {
                Ok(parsed) => self.run_parsed(parsed, None),
                Err(e) => {
                    let _ = write!(self.err, "{e}");
                    EXIT_USAGE
                }
            };
        }
        last
    }

    fn dispatch(&mut self, cmd: Command) -> CliResult {
        match cmd {
            Command::Register { target, kdf, reuse_base } => self.register(&target, &kdf, reuse_base),
            Command::Login { target } => self.login_cmd(&target),
            Command::Passwd { target, kdf } => self.passwd(&target, &kdf),
            Command::Reset { target, token, kdf } => self.reset(&target, &token, &kdf),
            Command::Vault { action } => match action {
                VaultCommand::Add { site, login, secret_file, kdf } => self.vault_add(&site, &login, secret_file.as_deref(), &kdf),
                VaultCommand::Get { site, login } => self.vault_get(&site, login.as_deref()),
                VaultCommand::List { json } => self.vault_list(json),
                VaultCommand::Remove { site, login } => self.vault_remove(&site, &login),
                VaultCommand::Sync { target } => self.vault_sync(&target),
            },
            Command::Shell => Err(CliError::Usage("shell cannot be nested".into())),
        }
    }

    fn group(&self) -> std::sync::Arc<GroupParams> {
        self.opts.group.unwrap_or(GroupProfile::Modp2048).params()
    }

    fn vault_path(&self) -> CliResult<PathBuf> {
        match &self.opts.vault {
            Some(p) => Ok(p.clone()),
            None => dirs::config_dir()
                .map(|d| d.join("authstore").join("vault.avlt"))
                .ok_or_else(|| CliError::Usage("no config directory; pass --vault".into())),
        }
    }

    fn read_password(&mut self, prompt: &str) -> CliResult<Zeroizing<String>> {
        let pw = if let Some(path) = self.opts.password_file.clone() {
            if self.password_lines.is_none() {
                let text = Zeroizing::new(fs::read_to_string(&path)?);
                let lines: Vec<Zeroizing<String>> = text.lines().map(|l| Zeroizing::new(l.to_owned())).collect();
                self.password_lines = Some((lines, 0));
            }
            let (lines, next) = self.password_lines.as_mut().expect("loaded above");
            let line = lines.get(*next).or(lines.last()).cloned().ok_or_else(|| CliError::Usage("password file is empty".into()))?;
            *next += 1;
            line
        } else {
            Zeroizing::new(rpassword::prompt_password(prompt)?)
        };
        if pw.is_empty() {
            return Err(CliError::Usage("empty password".into()));
        }
        Ok(pw)
    }

    fn read_new_password(&mut self, prompt: &str) -> CliResult<Zeroizing<String>> {
        let pw = self.read_password(prompt)?;
        if self.opts.password_file.is_none() {
            let again = self.read_password("Repeat password: ")?;
            if *again != *pw {
                return Err(CliError::Usage("passwords do not match".into()));
            }
        }
        Ok(pw)
    }

    fn connect(&self, server: &str) -> CliResult<(FramedStream<TcpStream>, FrameLog)> {
        let addr = std::net::ToSocketAddrs::to_socket_addrs(server)
            .map_err(|e| CliError::Failed(format!("{server}: {e}")))?
            .next()
            .ok_or_else(|| CliError::Failed(format!("{server}: no address")))?;
        let stream = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT)?;
        let log = FrameLog::new();
        Ok((FramedStream::with_log(stream, log.clone()), log))
    }

    fn write_transcript(&self, log: &FrameLog) -> CliResult {
        let Some(path) = &self.opts.transcript else { return Ok(()) };
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        for (dir, frame) in log.frames() {
            let arrow = match dir {
                Direction::Sent => ">",
                Direction::Received => "<",
            };
            writeln!(file, "{arrow} {}", hex::encode(frame))?;
        }
        Ok(())
    }

    /// Logs in, remembering the base key and the session.
    fn login(&mut self, server: &str, username: &str, password: &[u8]) -> CliResult<Session<TcpStream>> {
        let (stream, log) = self.connect(server)?;
        let result = client::login(stream, self.group(), username, Credential::Password { password, cache: &self.cache }, &mut OsRng);
        self.write_transcript(&log)?;
        let session = result?;
        let params = session.p_pi().base;
        let base = self.cache.base_key(&params, password).map_err(|e| CliError::Failed(e.to_string()))?;
        self.last_base = Some((params, base));
        Ok(session)
    }

    fn register(&mut self, target: &[String], kdf: &KdfOpts, reuse_base: bool) -> CliResult {
        let (server, username) = split_target(target)?;
        let username = canonicalize_username(&username).map_err(|_| CliError::Usage("invalid username".into()))?;
        let group = self.group();
        let (p_pi, base) = if reuse_base {
            let (params, base) = self
                .last_base
                .clone()
                .ok_or_else(|| CliError::Usage("--reuse-base needs an earlier login in this process (use `shell`)".into()))?;
            (UserKeyParams::generate(params, &mut OsRng), base)
        } else {
            let pw = self.read_new_password("Password: ")?;
            let params = kdf.params(None)?;
            let base = self.cache.base_key(&params, pw.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
            (UserKeyParams::generate(params, &mut OsRng), base)
        };
        let key = derive_user_key(&base, &p_pi.user_salt);
        let h = group.encode(&group.exp_gen(&to_auth_scalar(&key, &group)));
        let (mut stream, log) = self.connect(&server)?;
        let result = client::register(&mut stream, &username, p_pi, h);
        self.write_transcript(&log)?;
        result?;
        self.last_base = Some((p_pi.base, base));
        self.remember_user_key(&server, &username, &p_pi)?;
        writeln!(self.out, "registered {username}")?;
        Ok(())
    }

    fn login_cmd(&mut self, target: &[String]) -> CliResult {
        let (server, username) = split_target(target)?;
        let pw = self.read_password("Password: ")?;
        let session = self.login(&server, &username, pw.as_bytes())?;
        let p_pi = *session.p_pi();
        let canonical = session.username().to_owned();
        self.session = Some((server.clone(), canonical.clone(), session));
        self.remember_user_key(&server, &canonical, &p_pi)?;
        writeln!(self.out, "OK")?;
        Ok(())
    }

    /// Stores `K_u` for this provider in the vault when the cached base key opens it.
    fn remember_user_key(&mut self, server: &str, username: &str, p_pi: &UserKeyParams) -> CliResult {
        let path = self.vault_path()?;
        if !path.exists() {
            return Ok(());
        }
        let Some(mut handle) = self.open_vault_cached(&VaultDocument::read_file(&path)?) else {
            return Ok(());
        };
        let (_, base) = self.last_base.as_ref().expect("set by caller");
        let key = derive_user_key(base, &p_pi.user_salt);
        handle.upsert(CredentialRecord::user_key_cache(&provider_site(server), username, &key, *p_pi))?;
        handle.save(&path, &mut OsRng)?;
        Ok(())
    }

    /// Opens the vault with the cached base key when its parameters match.
    fn open_vault_cached(&self, doc: &VaultDocument) -> Option<VaultHandle> {
        let (params, base) = self.last_base.as_ref()?;
        let u = &doc.data_params.u_params;
        if u.base != *params {
            return None;
        }
        doc.open_with_user_key(&derive_user_key(base, &u.user_salt)).ok()
    }

    fn open_vault(&mut self, doc: &VaultDocument) -> CliResult<(VaultHandle, Option<Zeroizing<String>>)> {
        if let Some(h) = self.open_vault_cached(doc) {
            return Ok((h, None));
        }
        let pw = self.read_password("Vault password: ")?;
        let handle = doc.open(pw.as_bytes(), &self.cache)?;
        Ok((handle, Some(pw)))
    }

    fn passwd(&mut self, target: &[String], kdf: &KdfOpts) -> CliResult {
        let (server, username) = split_target(target)?;
        let old = self.read_password("Current password: ")?;
        let mut session = self.login(&server, &username, old.as_bytes())?;
        let new = self.read_new_password("New password: ")?;
        let params = kdf.params(Some(&session.p_pi().base))?;
        let group = self.group();
        let (p_pi, _, h) = client::make_verifier(&group, new.as_bytes(), &params, &self.cache, &mut OsRng)?;
        session.change_credentials(p_pi, h)?;
        let base = self.cache.base_key(&params, new.as_bytes()).map_err(|e| CliError::Failed(e.to_string()))?;
        self.last_base = Some((params, base));

        let path = self.vault_path()?;
        if path.exists() {
            let doc = VaultDocument::read_file(&path)?;
            match doc.change_password(old.as_bytes(), new.as_bytes(), &params, &self.cache, &mut OsRng) {
                Ok(rewrapped) => {
                    rewrapped.write_file(&path)?;
                    writeln!(self.out, "vault rewrapped")?;
                }
                Err(VaultError::VaultLocked) => {
                    writeln!(self.err, "warning: vault uses a different password; left unchanged")?;
                }
                Err(e) => return Err(e.into()),
            }
            self.remember_user_key(&server, session.username(), &p_pi)?;
        }
        let canonical = session.username().to_owned();
        self.session = Some((server, canonical, session));
        writeln!(self.out, "password changed")?;
        Ok(())
    }

    fn reset(&mut self, target: &[String], token: &str, kdf: &KdfOpts) -> CliResult {
        let (server, username) = split_target(target)?;
        let group = self.group();
        let token = ResetToken::from_hex(&group, token.trim()).ok_or_else(|| CliError::Usage("malformed reset token".into()))?;
        let (stream, log) = self.connect(&server)?;
        let result = client::login(stream, group.clone(), &username, Credential::ResetToken(token.scalar()), &mut OsRng);
        self.write_transcript(&log)?;
        let mut session = result?;
        writeln!(
            self.err,
            "warning: a reset restores login only; data encrypted under the old password cannot be recovered"
        )?;
        let new = self.read_new_password("New password: ")?;
        let params = kdf.params(Some(&session.p_pi().base))?;
        let (p_pi, _, h) = client::make_verifier(&group, new.as_bytes(), &params, &self.cache, &mut OsRng)?;
        session.change_credentials(p_pi, h)?;
        let base = self.cache.base_key(&params, new.as_bytes()).map_err(|e| CliError::Failed(e.to_string()))?;
        self.last_base = Some((params, base));
        let canonical = session.username().to_owned();
        self.session = Some((server, canonical, session));
        writeln!(self.out, "password reset")?;
        Ok(())
    }

    fn vault_add(&mut self, site: &str, login: &str, secret_file: Option<&Path>, kdf: &KdfOpts) -> CliResult {
        let path = self.vault_path()?;
        let mut handle = if path.exists() {
            self.open_vault(&VaultDocument::read_file(&path)?)?.0
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            match (&self.last_base, kdf.is_set()) {
                (Some((params, base)), false) => {
                    let doc = create_with_base(params, base);
                    doc.open_with_user_key(&derive_user_key(base, &doc.data_params.u_params.user_salt))?
                }
                _ => {
                    let pw = self.read_new_password("New vault password: ")?;
                    let params = kdf.params(None)?;
                    VaultDocument::create(pw.as_bytes(), &params, &self.cache, &mut OsRng)?.open(pw.as_bytes(), &self.cache)?
                }
            }
        };
        let secret = match secret_file {
            Some(f) => {
                let text = Zeroizing::new(fs::read(f)?);
                let end = text.iter().position(|&b| b == b'\n').unwrap_or(text.len());
                Zeroizing::new(text[..end].to_vec())
            }
            None => Zeroizing::new(rpassword::prompt_password("Secret: ")?.into_bytes()),
        };
        handle.add(CredentialRecord::web_password(site, login, &secret))?;
        handle.save(&path, &mut OsRng)?;
        writeln!(self.out, "added {site} {login}")?;
        Ok(())
    }

    fn load_vault(&mut self) -> CliResult<VaultHandle> {
        let path = self.vault_path()?;
        if !path.exists() {
            return Err(CliError::Failed(format!("no vault at {}", path.display())));
        }
        Ok(self.open_vault(&VaultDocument::read_file(&path)?)?.0)
    }

    fn vault_get(&mut self, site: &str, login: Option<&str>) -> CliResult {
        let handle = self.load_vault()?;
        let record = match login {
            Some(l) => handle.get(site, l)?,
            None => match handle.find_site(site).as_slice() {
                [one] => *one,
                [] => return Err(VaultError::NotFound.into()),
                _ => return Err(CliError::Usage(format!("several logins for {site}; name one"))),
            },
        };
        match record.kind {
            RecordKind::WebPassword => writeln!(self.out, "{}", String::from_utf8_lossy(&record.secret))?,
            RecordKind::UserKeyCache => writeln!(self.out, "{}", hex::encode(&record.secret))?,
        }
        Ok(())
    }

    fn vault_list(&mut self, json: bool) -> CliResult {
        let handle = self.load_vault()?;
        let records = handle.list();
        if json {
            let items: Vec<serde_json::Value> = records
                .iter()
                .map(|r| serde_json::json!({ "site": r.site, "login": r.login, "kind": r.kind.as_str() }))
                .collect();
            writeln!(self.out, "{}", serde_json::Value::Array(items))?;
        } else {
            let sw = records.iter().map(|r| r.site.len()).max().unwrap_or(0).max(4);
            let lw = records.iter().map(|r| r.login.len()).max().unwrap_or(0).max(5);
            writeln!(self.out, "{:sw$}  {:lw$}  KIND", "SITE", "LOGIN")?;
            for r in records {
                writeln!(self.out, "{:sw$}  {:lw$}  {}", r.site, r.login, r.kind.as_str())?;
            }
        }
        Ok(())
    }

    fn vault_remove(&mut self, site: &str, login: &str) -> CliResult {
        let path = self.vault_path()?;
        let mut handle = self.load_vault()?;
        handle.remove(site, login)?;
        handle.save(&path, &mut OsRng)?;
        writeln!(self.out, "removed {site} {login}")?;
        Ok(())
    }

    fn vault_sync(&mut self, target: &[String]) -> CliResult {
        let (server, username) = split_target(target)?;
        let canonical = canonicalize_username(&username).map_err(|_| CliError::Usage("invalid username".into()))?;
        let mut session = match self.session.take() {
            Some((s, u, session)) if s == server && u == canonical => session,
            _ => {
                let pw = self.read_password("Password: ")?;
                self.login(&server, &username, pw.as_bytes())?
            }
        };
        let result = self.sync_with(&mut session);
        self.session = Some((server, canonical, session));
        result
    }

    fn sync_with(&mut self, session: &mut Session<TcpStream>) -> CliResult {
        let path = self.vault_path()?;
        let state_path = sync_state_path(&path);
        let state = SyncState::load(&state_path);
        let local = if path.exists() { Some(fs::read(&path)?) } else { None };
        let (remote_version, remote) = session.get_blob()?;

        let local_changed = match (&local, &state) {
            (Some(bytes), Some(st)) => digest(bytes) != st.digest,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let known = state.as_ref().map_or(0, |s| s.version);

        let action = match &local {
            None if remote_version == 0 => return Err(CliError::Failed("nothing to sync: no local vault and none on the server".into())),
            None => SyncAction::Pull,
            Some(bytes) if remote_version > 0 && *bytes == remote => SyncAction::Record,
            Some(_) if remote_version == known && local_changed => SyncAction::Push,
            Some(_) if remote_version == known => SyncAction::Record,
            Some(_) if !local_changed => SyncAction::Pull,
            Some(_) => return Err(CliError::Failed("sync conflict: local and server vaults both changed".into())),
        };
        match action {
            SyncAction::Push => {
                let bytes = local.expect("push needs a local vault");
                VaultDocument::decode(&bytes)?;
                let version = remote_version + 1;
                session.put_blob(version, bytes.clone())?;
                SyncState { version, digest: digest(&bytes) }.store(&state_path)?;
                writeln!(self.out, "pushed version {version}")?;
            }
            SyncAction::Pull => {
                let doc = VaultDocument::decode(&remote)?;
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                write_atomic(&path, &remote)?;
                SyncState { version: remote_version, digest: digest(&remote) }.store(&state_path)?;
                writeln!(self.out, "pulled version {remote_version}")?;
                if self.open_vault_cached(&doc).is_none() {
                    writeln!(self.err, "warning: the synced vault does not open with the current login key")?;
                }
            }
            SyncAction::Record => {
                SyncState { version: remote_version, digest: digest(&remote) }.store(&state_path)?;
                writeln!(self.out, "up to date at version {remote_version}")?;
            }
        }
        Ok(())
    }
}

enum SyncAction {
    Push,
    Pull,
    Record,
}

fn create_with_base(params: &KdfParams, base: &BaseKey) -> VaultDocument {
    // a throwaway cache seeded with the known base key; the password slot is unused
    let cache = KeyCache::new();
    cache.insert(params, b"\0cached", base.clone());
    VaultDocument::create(b"\0cached", params, &cache, &mut OsRng).expect("cache hit cannot fail")
}

fn provider_site(server: &str) -> String {
    format!("authstore:{server}")
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(labeled_hash("AS-sync", &[bytes]))
}

fn sync_state_path(vault: &Path) -> PathBuf {
    let mut name = vault.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".sync");
    vault.with_file_name(name)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SyncState {
    version: u64,
    digest: String,
}

impl SyncState {
    fn load(path: &Path) -> Option<SyncState> {
        serde_json::from_slice(&fs::read(path).ok()?).ok()
    }

    fn store(&self, path: &Path) -> CliResult {
        write_atomic(path, serde_json::to_string(self).expect("plain struct").as_bytes())?;
        Ok(())
    }
}

fn split_target(target: &[String]) -> CliResult<(String, String)> {
    match target {
        [server, user] => Ok((server.clone(), user.clone())),
        [user] => match std::env::var(SERVER_ENV) {
            Ok(server) if !server.is_empty() => Ok((server, user.clone())),
            _ => Err(CliError::Usage(format!("missing server (argument or {SERVER_ENV})"))),
        },
        _ => Err(CliError::Usage("expected [SERVER] USERNAME".into())),
    }
}

fn merge(line: &GlobalOpts, defaults: &GlobalOpts) -> GlobalOpts {
    GlobalOpts {
        vault: line.vault.clone().or_else(|| defaults.vault.clone()),
        group: line.group.or(defaults.group),
        password_file: line.password_file.clone().or_else(|| defaults.password_file.clone()),
        transcript: line.transcript.clone().or_else(|| defaults.transcript.clone()),
        kdf_stats: line.kdf_stats || defaults.kdf_stats,
    }
}

/// Entry point shared by the binary and tests. `args` excludes the program name.
pub fn run<S: AsRef<str>>(args: &[S], stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let argv = std::iter::once("authstore").chain(args.iter().map(|a| a.as_ref()));
    let parsed = match CliArgs::try_parse_from(argv) {
        Ok(p) => p,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    let mut cli = Cli::new(out, err);
    cli.run_parsed(parsed, Some(stdin))
}
