use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvqkd_keyrate::app::{run, Command, RunOptions};
use cvqkd_keyrate::stats::GammaConvention;

/// Certified finite-size key rates for QPSK continuous-variable QKD.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Conic backend.
    #[arg(long, global = true, value_parser = ["internal", "external"])]
    backend: Option<String>,
    /// Photon-number cutoff.
    #[arg(long, global = true)]
    nc: Option<usize>,
    /// Use the literal interval rows.
    #[arg(long, global = true)]
    literal_primal: bool,
    /// Incomplete-gamma argument convention.
    #[arg(long, global = true, value_parser = ["literal", "squared"])]
    gamma_convention: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the base configuration.
    Point,
    /// Evaluate the Cartesian product of the sweep axes.
    Sweep,
    /// Grid-search amplitude and postselection at every sweep point.
    Optimize,
    /// Plot an existing results table.
    Plot {
        /// Input table; defaults to <out>/results.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Axis to plot; defaults to every varying sweep axis.
        #[arg(long)]
        axis: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, csv, axis) = match cli.command {
        Cmd::Point => (Command::Point, None, None),
        Cmd::Sweep => (Command::Sweep, None, None),
        Cmd::Optimize => (Command::Optimize, None, None),
        Cmd::Plot { csv, axis } => (Command::Plot, csv, axis),
    };
    let gamma_convention = match cli.gamma_convention.as_deref().map(str::parse::<GammaConvention>) {
        Some(Ok(g)) => Some(g),
        Some(Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        None => None,
    };
    let opts = RunOptions {
        config: cli.config,
        out: cli.out,
        threads: cli.threads,
        backend: cli.backend,
        n_c: cli.nc,
        literal_primal: cli.literal_primal,
        gamma_convention,
        csv,
        axis,
    };
    match run(command, &opts) {
        Ok(outcome) => {
            for r in &outcome.reports {
                eprintln!(
                    "{}: L={} N={:e} r_test={} alpha={} delta_r={} H={} l/N={:e} expected={:e}",
                    r.status.as_str(),
                    r.distance_km,
                    r.n_total,
                    r.r_test,
                    r.alpha,
                    r.delta_r,
                    r.h_lower_bound,
                    r.key_rate,
                    r.expected_rate
                );
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
