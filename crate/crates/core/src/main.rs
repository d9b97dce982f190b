//! Binary entry point: deterministic runs driven by a config file.

use clap::{Parser, Subcommand};
use fraclab::cli;
use fraclab::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Spectral numerical laboratory for the fractional Yamabe flow.
#[derive(Parser)]
#[command(name = "fraclab", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "fraclab.toml")]
    config: PathBuf,

    /// Output directory for CSV and report files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the seed recorded in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured flow and write diagnostics CSV.
    Flow,
    /// Write the multiplier / weighted-eigenvalue table.
    Spectrum,
    /// Run the invariant battery and print pass/fail per check.
    Verify,
    /// Concentration bookkeeping on the configured initial field.
    Bubble,
    /// Fan the flow out over the configured gamma sweep.
    Sweep,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let name = match args.command {
        Command::Flow => "flow",
        Command::Spectrum => "spectrum",
        Command::Verify => "verify",
        Command::Bubble => "bubble",
        Command::Sweep => "sweep",
    };
    let mut cfg = match RunConfig::from_path(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    cli::apply_seed_override(&mut cfg, args.seed);
    match cli::dispatch(name, &cfg, &args.out, args.quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
