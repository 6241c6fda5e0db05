use std::io::{self, BufRead};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use authstore_core::group::GroupProfile;
use authstore_core::stretch::KdfParams;
use authstore_server::{Server, ServerConfig};
use clap::Parser;

#[derive(Parser)]
#[command(name = "authstore-server", about = "Run the account and vault storage server")]
struct Args {
    /// Address for client connections.
    #[arg(long, default_value = "127.0.0.1:7700")]
    listen: SocketAddr,
    /// Loopback address for reset issuance.
    #[arg(long)]
    admin: Option<SocketAddr>,
    /// Data directory; AUTHSTORE_DATA_DIR takes precedence.
    #[arg(long, default_value = "authstore-data")]
    data_dir: PathBuf,
    /// Group profile: toy, test-256 or modp-2048. Fixed per data directory.
    #[arg(long, default_value = "modp-2048")]
    group: GroupProfile,
    #[arg(long, default_value = "authstore")]
    provider_id: String,
    /// Failed logins per username per minute before throttling.
    #[arg(long, default_value_t = 5)]
    rate_limit: u32,
    /// Use the iterated-hash KDF with this many rounds for decoy parameters.
    #[arg(long)]
    decoy_test_kdf: Option<u32>,
    /// Append every frame, hex encoded, to this file.
    #[arg(long)]
    wire_log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = ServerConfig::new(args.data_dir);
    config.listen = args.listen;
    config.admin_listen = args.admin;
    config.profile = args.group;
    config.provider_id = args.provider_id;
    config.rate_limit = args.rate_limit;
    config.rate_window = Duration::from_secs(60);
    config.wire_log = args.wire_log;
    if let Some(rounds) = args.decoy_test_kdf {
        match KdfParams::test_iterated([0; 16], rounds) {
            Ok(p) => config.decoy_kdf = p,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let config = config.apply_env();

    let server = match Server::bind(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    println!("listening on {}", server.local_addr());
    if let Some(admin) = server.admin_addr() {
        println!("admin on {admin}");
    }
    let handle = server.spawn();

    // stdin carries operator commands; EOF leaves the server running
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["reset", user] => match handle.issue_reset(user) {
                Ok(token) => println!("reset token for {user}: {token}"),
                Err(e) => println!("reset failed: {e}"),
            },
            ["quit"] | ["shutdown"] => {
                handle.shutdown();
                return ExitCode::SUCCESS;
            }
            [] => {}
            _ => println!("commands: reset <username>, quit"),
        }
    }
    loop {
        std::thread::park();
    }
}
