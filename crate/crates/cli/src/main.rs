//! Benchmark pipeline for learned graph sparsification: generate random
//! geometric instances, label them with exact solutions, train the
//! node-selection policy, solve with tree search against baselines, and
//! plot the comparisons.

mod common;
mod csvio;
mod exact;
mod gen;
mod label;
mod plot;
mod solve;
mod svg;
mod train;

use clap::{Parser, Subcommand};

use common::CliError;

#[derive(Parser)]
#[command(name = "sparse-mcts", version, about = "Graph sparsification benchmark pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random geometric instances into a dataset file.
    Gen(gen::GenArgs),
    /// Solve instances exactly and expand labeled training samples.
    Label(label::LabelArgs),
    /// Train the node-selection policy on labeled samples.
    Train(train::TrainArgs),
    /// Benchmark baseline, search, and exact costs over a dataset.
    Solve(solve::SolveArgs),
    /// Render cost scatter plots from a results CSV.
    Plot(plot::PlotArgs),
    /// Run only the exact oracle over a dataset.
    Exact(exact::ExactArgs),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen(args) => gen::run(args),
        Command::Label(args) => label::run(args),
        Command::Train(args) => train::run(args),
        Command::Solve(args) => solve::run(args),
        Command::Plot(args) => plot::run(args),
        Command::Exact(args) => exact::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = dispatch(cli.command) {
        eprintln!("error: {}", error.message());
        std::process::exit(error.exit_code());
    }
}
