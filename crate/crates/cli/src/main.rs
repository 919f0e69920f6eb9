use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ptpsec::scenario::{self, ScenarioConfig, ScenarioError};
use ptpsec::security;

#[derive(Parser)]
#[command(name = "ptpsec", version, about = "Secured PTP engine and attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List bundled scenarios.
    List,
    /// Time Ed25519 signing and verification of a FOLLOW_UP.
    Bench {
        #[arg(long, default_value_t = 1000)]
        iters: usize,
    },
}

fn load(config: &str) -> Result<ScenarioConfig, ScenarioError> {
    let path = PathBuf::from(config);
    if path.exists() {
        ScenarioConfig::load(&path)
    } else if scenario::BUNDLED.iter().any(|(n, _)| *n == config) {
        scenario::bundled(config)
    } else {
        ScenarioConfig::load(&path)
    }
}

fn run(config: &str, seed: Option<u64>, out: PathBuf) -> Result<(), ScenarioError> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = scenario::run(&cfg)?;
    scenario::write_outputs(&result, &out)?;
    print!("{}", result.summary.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => match run(&config, seed, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) if e.is_capability_violation() => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("error: {config}: {e}");
                ExitCode::from(2)
            }
        },
        Command::List => {
            for (name, src) in scenario::BUNDLED {
                let desc = ScenarioConfig::parse(src)
                    .map(|c| c.description)
                    .unwrap_or_default();
                println!("{name:<32} {desc}");
            }
            ExitCode::SUCCESS
        }
        Command::Bench { iters } => match security::benchmark_crypto(iters) {
            Ok(b) => {
                println!("sign_median_ms: {:.4}", b.sign_median_ns as f64 / 1e6);
                println!("verify_median_ms: {:.4}", b.verify_median_ns as f64 / 1e6);
                println!("sign_cpu_share_at_128hz: {:.4}", b.sign_cpu_share(128));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
