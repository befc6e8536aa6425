mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use surveytmle::Error;

/// How a command that ran to the end finished.
pub enum Outcome {
    Ok,
    NotConverged,
    OracleFailure,
}

const EXIT_INPUT: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_ORACLE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence(_) | Error::DegenerateGamma(_) | Error::RejectiveInfeasible { .. } => {
            EXIT_NONCONVERGENCE
        }
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    log::info!("surveytmle {}", env!("CARGO_PKG_VERSION"));
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }

    let result = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Pilot(a) => commands::pilot(a),
        Command::TmleBinary(a) => commands::tmle_binary(a),
        Command::TmleContinuous(a) => commands::tmle_continuous(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(EXIT_NONCONVERGENCE),
        Ok(Outcome::OracleFailure) => ExitCode::from(EXIT_ORACLE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::InvalidInput("x".into())), 2);
        assert_eq!(exit_code(&Error::NonConvergence("x".into())), 3);
        assert_eq!(exit_code(&Error::DegenerateGamma(1.0)), 3);
    }
}
