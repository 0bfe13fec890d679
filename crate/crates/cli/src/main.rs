//! `mps-sso`: synthesize shallow staircase circuits that prepare matrix
//! product states, benchmark the synthesis methods against Hamiltonian
//! ground states, and inspect MPS files.
//!
//! Every run is reproducible: the full parameter set (flags merged over an
//! optional `--config` JSON file) forms a serialisable run configuration,
//! and `--save-config` writes the resolved form so the exact run can be
//! repeated from the file alone.
//!
//! Exit codes: 0 success; 2 validation, file, or format errors; 3 numerical
//! failure. Errors print to stderr as a single machine-parseable line
//! `error: <kind>: <reason>`.

mod benchmark;
mod config;
mod inspect;
mod synthesize;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mps_sso::Result;

#[derive(Parser)]
#[command(name = "mps-sso", version, about = "Shallow-depth state preparation for matrix product states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a preparation circuit for one target state.
    Synthesize(synthesize::SynthesizeArgs),
    /// Run a methods x layers benchmark grid against a model ground state.
    Benchmark(benchmark::BenchmarkArgs),
    /// Print Schmidt data of an MPS file.
    Inspect(inspect::InspectArgs),
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize(args) => synthesize::run(args),
        Command::Benchmark(args) => benchmark::run(args),
        Command::Inspect(args) => inspect::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // single line: newlines inside messages would break parsers
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
