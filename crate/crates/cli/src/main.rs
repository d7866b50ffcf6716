//! Command-line surface: generate synthetic datasets, fit a model (full EM
//! or a baseline), score a fit against ground truth, and run grid sweeps.
//!
//! Exit codes: 0 ok, 2 usage or configuration, 3 fit failure, 4 I/O or
//! malformed data.

mod commands;
mod config;
mod sweep;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use ghmm::Error;

#[derive(Parser)]
#[command(
    name = "ghmm",
    version,
    about = "Joint clustering and graph recovery for heat-diffusion signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset with known clusters and graphs.
    Generate(commands::GenerateArgs),
    /// Fit a model to a signal CSV and save it as a bundle.
    Fit(commands::FitArgs),
    /// Score a fitted bundle against a ground-truth directory.
    Eval(commands::EvalArgs),
    /// Run the generate/fit/eval protocol over a grid of m or tau values.
    Sweep(sweep::SweepArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AllRestartsFailed { .. }
        | Error::NonFinite { .. }
        | Error::EmptyCluster { .. }
        | Error::MaxResamples { .. } => 3,
        Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Parse { .. }
        | Error::RaggedRows { .. }
        | Error::DuplicateEdge { .. }
        | Error::IndexOutOfRange { .. }
        | Error::SchemaVersionMismatch { .. }
        | Error::MissingFile { .. }
        | Error::InvalidGraph { .. }
        | Error::InvalidModel { .. }
        | Error::DimensionMismatch { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let (_, sub) = matches
        .subcommand()
        .expect("clap enforces a subcommand");
    let result = match cli.command {
        Cmd::Generate(mut args) => {
            config::apply(&mut args, sub).and_then(|()| commands::generate(&args))
        }
        Cmd::Fit(mut args) => config::apply(&mut args, sub).and_then(|()| commands::fit(&args)),
        Cmd::Eval(mut args) => config::apply(&mut args, sub).and_then(|()| commands::eval(&args)),
        Cmd::Sweep(mut args) => config::apply(&mut args, sub).and_then(|()| sweep::sweep(&args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
