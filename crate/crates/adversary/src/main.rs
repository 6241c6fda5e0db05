use std::process::ExitCode;

use authstore_adversary::scenarios::{self, Options, Scenario};
use clap::Parser;

#[derive(Parser)]
#[command(name = "authstore-adversary", about = "Run an attack scenario and print a JSON report")]
struct Args {
    scenario: Scenario,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Dictionary size for the parameter-attack scenarios.
    #[arg(long, default_value_t = 1000)]
    candidates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = Options { trials: args.trials, candidates: args.candidates, seed: args.seed };
    match scenarios::run(args.scenario, &opts) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("authstore-adversary: {e}");
            ExitCode::FAILURE
        }
    }
}
