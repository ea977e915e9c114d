//! `slogse`: batch front end for the regularized stochastic log-NLS simulator.
//!
//! Exit codes: 0 success, 1 a property with explicit constants was violated,
//! 2 usage or configuration error, 3 the integration produced a non-finite value.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "slogse", version, about = "Regularized stochastic logarithmic Schrödinger simulator")]
struct Cli {
    /// Suppress progress and summaries on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one noise path and write diagnostics and states.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Shared-noise ε sweep; writes the consecutive-pair distance report.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Strictly decreasing, comma separated, at least four values.
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        /// Localization radius, default ell/8.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Randomized scan of one inequality.
    Props {
        #[arg(long)]
        lemma: String,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the norms and functionals of a CFLD1 field.
    Norms {
        file: PathBuf,
        /// Coupling used for the energy.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        lambda: f64,
    },
    /// Sample one noise path and summarize ensemble moments.
    Noise {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = commands::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let quiet = cli.quiet;
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, out, seed, quiet),
        Command::Converge { config, eps_list, radius, out, seed } => {
            commands::converge(&config, &eps_list, radius, out, seed, quiet)
        }
        Command::Props { lemma, samples, seed, out } => commands::props(&lemma, samples, seed, out, quiet),
        Command::Norms { file, lambda } => commands::norms(&file, lambda),
        Command::Noise { config, out, seed } => commands::noise(&config, out, seed, quiet),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
