//! `frame`: merge point-cloud maps built by different robots, simulate
//! tunnel worlds to produce test data, compute descriptor records from
//! scans, and evaluate merge reports against ground truth.
//!
//! Exit codes: 0 on success, 1 when an input file is missing or malformed
//! (the message names the file and byte offset), 2 when the pipeline itself
//! fails (the message names the failing stage).

mod common;
mod descriptors;
mod eval;
mod merge;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "frame",
    version,
    about = "Merge, simulate, and evaluate 3D point-cloud maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge map B into map A's frame
    Merge(merge::MergeArgs),
    /// Merge several maps left to right into the first map's frame
    MergeRecursive(merge::MergeRecursiveArgs),
    /// Generate tunnel worlds and simulate sensor runs through them
    Simulate(simulate::SimulateArgs),
    /// Compute descriptor records from per-step scans and a trajectory
    Descriptors(descriptors::DescriptorsArgs),
    /// Evaluate merge reports against a ground-truth sidecar
    Eval(eval::EvalArgs),
}

/// Honor the FRAME_THREADS cap before any parallel work starts.
fn init_threads() {
    if let Ok(raw) = std::env::var("FRAME_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: FRAME_THREADS must be a positive integer, ignoring {raw:?}"),
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Merge(args) => merge::run_pair(args),
        Command::MergeRecursive(args) => merge::run_recursive(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Descriptors(args) => descriptors::run(args),
        Command::Eval(args) => eval::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
