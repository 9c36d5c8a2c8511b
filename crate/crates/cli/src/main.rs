//! `compresslab` - train, prune, distill, and sweep from one binary.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error. Diagnostics
//! go to stderr; data goes to files under `--out` or to stdout.

mod args;
mod commands;
mod config;
mod data;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, DataArgs};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> CliError {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> CliError {
        CliError::Runtime(msg.into())
    }

    pub fn validation_from(e: compresslab::Error) -> CliError {
        CliError::Validation(e.to_string())
    }

    pub fn runtime_from(e: compresslab::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };

    let filter = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter))
        .format_timestamp(None)
        .init();

    let default_data = DataArgs {
        dataset: "blobs".into(),
        idx_images: None,
        idx_labels: None,
        cifar_batch: vec![],
        classes: 4,
        per_class: 100,
        dims: 16,
        separation: 6.0,
        data_seed: None,
        split: 0.8,
    };

    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a, cli.seed, &cli.out),
        Command::Prune(a) => commands::prune_cmd(a, cli.seed, &cli.out),
        Command::Distill(a) => commands::distill_cmd(a, cli.seed, &cli.out),
        Command::Pipeline(a) => {
            commands::pipeline_cmd(a, cli.seed, &cli.out, cli.canonical, &default_data)
        }
        Command::Eval(a) => commands::eval_cmd(a, cli.seed),
        Command::Report(a) => commands::report_cmd(a),
    };

    match result {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
