use std::process::ExitCode;

use clap::Parser;
use hindsight::cli;

fn main() -> ExitCode {
    let config = cli::ExperimentConfig::parse();
    ExitCode::from(cli::run(config))
}
