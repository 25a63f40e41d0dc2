//! `ciptrace`: fit GP priors to traces, design private noise mechanisms, release sanitized
//! traces and evaluate mechanisms against a Bayesian adversary.
//!
//! Exit codes: 0 success, 1 input error, 2 solver failure.

mod args;
mod design;
mod evaluate;
mod fit;
mod sanitize;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "ciptrace", version, about = "Correlated Gaussian noise for private trace release")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit kernel lengthscales to a directory of traces by grid maximum likelihood.
    Fit(fit::FitArgs),
    /// Design a noise mechanism for a secret and write it with its privacy report.
    Design(design::DesignArgs),
    /// Add mechanism noise to a trace.
    Sanitize(sanitize::SanitizeArgs),
    /// Posterior intervals and privacy bounds over a lengthscale sweep, as CSV.
    Evaluate(evaluate::EvaluateArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let solver = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<ciptrace::Error>(),
            Some(ciptrace::Error::Solver(_) | ciptrace::Error::RankDeficient { .. })
        )
    });
    if solver {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Design(a) => design::run(a),
        Command::Sanitize(a) => sanitize::run(a),
        Command::Evaluate(a) => evaluate::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
