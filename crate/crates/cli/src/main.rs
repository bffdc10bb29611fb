//! `relshare`: generate synthetic benchmarks, train and evaluate models,
//! explain predictions and rerun the experiment suites.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use relshare::Error;

use args::{Cli, Command};

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Data,
    Numeric,
}

impl Failure {
    fn code(self) -> u8 {
        match self {
            Failure::Usage => 2,
            Failure::Data => 3,
            Failure::Numeric => 4,
        }
    }

    fn kind(self) -> &'static str {
        match self {
            Failure::Usage => "invalid_argument",
            Failure::Data => "data_format",
            Failure::Numeric => "numeric",
        }
    }

    pub fn of(err: &Error) -> Self {
        match err {
            Error::Shape(_) | Error::InvalidArgument(_) | Error::UndefinedMetric(_) => {
                Failure::Usage
            }
            Error::Format(_) | Error::Json(_) | Error::Io(_) => Failure::Data,
            Error::Numeric(_) => Failure::Numeric,
        }
    }
}

fn report(failure: Failure, message: &str) -> ExitCode {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!(
        "error code={} kind={}: {flat}",
        failure.code(),
        failure.kind()
    );
    ExitCode::from(failure.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("bad arguments");
            return report(Failure::Usage, first.trim_start_matches("error: "));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return report(Failure::Usage, "--jobs must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            return report(Failure::Usage, &e.to_string());
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::Reproduce(a) => commands::reproduce(a),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(Failure::of(&e), &e.to_string()),
    }
}
