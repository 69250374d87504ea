mod args;
mod commands;
mod output;
mod svg;

use args::{Cli, Command};
use clap::Parser;
use std::process::ExitCode;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Failure::Data(e.into())
    }

    pub fn numeric(e: impl Into<anyhow::Error>) -> Self {
        Failure::Numeric(e.into())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(e) => write!(f, "data error: {e:#}"),
            Failure::Numeric(e) => write!(f, "numeric failure: {e:#}"),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = args::load_config(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Ingest(a) => commands::ingest(args::resolve(a, &cfg)?),
        Command::Classify(a) => commands::classify_matrices(args::resolve(a, &cfg)?),
        Command::Solve(a) => commands::solve(args::resolve(a, &cfg)?),
        Command::Simulate(a) => commands::simulate(args::resolve(a, &cfg)?),
        Command::Sweep(a) => commands::sweep(args::resolve(a, &cfg)?),
        Command::Stability(a) => commands::stability(args::resolve(a, &cfg)?),
        Command::Axioms(a) => commands::axioms(args::resolve(a, &cfg)?),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("prefdyn: {f}");
            ExitCode::from(f.code())
        }
    }
}
