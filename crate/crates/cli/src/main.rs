use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use vine_cli::{execute, Command, Context, RunConfig};

/// Simulation and characterization harness for a tip-steered vine robot.
#[derive(Debug, Parser)]
#[command(name = "vine", version)]
struct Cli {
    /// JSON file with geometry, sim, noise and blocked_force sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "vine-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.config.as_deref().map(RunConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("vine: cannot load config: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Context {
        config,
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match execute(&cli.command, &ctx) {
        Ok((summary, _)) => {
            print!("{}", summary.table());
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("vine {}: {e}", cli.command.name());
            ExitCode::from(2)
        }
    }
}
