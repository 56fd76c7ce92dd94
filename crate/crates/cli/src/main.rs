use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kp_rankone::tau::Grid1D;
use kp_rankone_cli::{execute, Command, Flags, EXIT_USAGE};

/// KP tau-functions from rank-one matrix triples.
#[derive(Debug, Parser)]
#[command(name = "kp-rankone", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Pass threshold for verification reports (rank tolerance for `validate`).
    #[arg(long)]
    tol: Option<f64>,
    /// Grid `start:end:count`, both ends included.
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<Grid1D>,
    #[arg(long, allow_hyphen_values = true)]
    t2: Option<Grid1D>,
    #[arg(long, allow_hyphen_values = true)]
    t3: Option<Grid1D>,
    /// Spectral parameter grid for `psi-grid`.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<Grid1D>,
    /// Number of KP times kept.
    #[arg(long = "K")]
    truncation: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let flags = Flags {
        out: args.out,
        seed: args.seed,
        trials: args.trials,
        tol: args.tol,
        t1: args.t1,
        t2: args.t2,
        t3: args.t3,
        z: args.z,
        truncation: args.truncation,
    };
    match execute(args.command, &args.scenario, &flags) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if !outcome.pass {
                eprintln!("{}: at least one report failed", args.command.name());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let kp_rankone_cli::CliError::Inadmissible { report: Some(r), .. } = &e {
                eprintln!("{}", serde_json::to_string(r).unwrap_or_default());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
