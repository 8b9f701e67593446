use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, Args};
use detect_cli::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "detect", version, about = "Token economy wealth-distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the macro system and export trajectories.
    Simulate(Common),
    /// Run the agent-level exchange model and fit its equilibrium.
    Kinetic(Common),
    /// Solve for rates that make the target wealth stationary.
    Invert(Common),
    /// Validate a scenario without running it.
    Check(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's ensemble size.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    ensemble: Option<u64>,
    /// JSON merge patch applied before validation, e.g. the output of `invert`.
    #[arg(long)]
    patch: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, c) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Kinetic(c) => (Command::Kinetic, c),
        Cmd::Invert(c) => (Command::Invert, c),
        Cmd::Check(c) => (Command::Check, c),
    };
    let opts = RunOptions {
        command,
        scenario: c.scenario,
        out: c.out,
        seed: c.seed,
        ensemble: c.ensemble.map(|n| n as usize),
        patch: c.patch,
        threads: None,
    };
    match run(&opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::to_string(&e.report()).expect("serializable error");
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
