#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod grid;

use clap::error::ErrorKind;
use clap::Parser;
use std::process::ExitCode;

use args::{Cli, Command};
use commands::NumericalFailure;

const WORKERS_ENV: &str = "SPARSECV_WORKERS";

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn init_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("{WORKERS_ENV}='{v}' is not a positive integer"))?;
    if n == 0 {
        return Err(format!("{WORKERS_ENV} must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NumericalFailure>().is_some() {
        return EXIT_NUMERICAL;
    }
    match err.downcast_ref::<sparsecv::Error>() {
        Some(sparsecv::Error::Numerical(_) | sparsecv::Error::NoStablePoints) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(msg) = init_workers() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Fit(a) => commands::fit(a),
        Command::Cv(a) => commands::cv(a),
        Command::Phase(a) => commands::phase(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
