mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ConvergenceArgs, FiniteArgs, SimulateArgs, StationaryArgs, ValidateArgs, VerifyArgs};

#[derive(Debug, Parser)]
#[command(
    name = "hybridqvi",
    version,
    about = "Solve and simulate hybrid optimal control problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Audit the model against the standing assumptions.
    Validate(ValidateArgs),
    /// Discounted infinite-horizon value function and policy.
    SolveStationary(StationaryArgs),
    /// Finite-horizon value slices and policies.
    SolveFinite(FiniteArgs),
    /// Simulate one trajectory under a policy or explicit controls.
    Simulate(SimulateArgs),
    /// Run every property suite.
    Verify(VerifyArgs),
    /// Grid refinement study.
    Convergence(ConvergenceArgs),
}

/// An error carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(Failure { code: 1, error })
    }

    pub fn check(message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Failure {
            code: 2,
            error: anyhow::anyhow!(message.into()),
        })
    }

    pub fn numerical(message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Failure {
            code: 3,
            error: anyhow::anyhow!(message.into()),
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Failure {}

fn code_for(e: &hybridqvi::Error) -> u8 {
    use hybridqvi::Error::*;
    match e {
        NoConvergence { .. } | SubIterationLimit { .. } | TooManyJumps(_) => 3,
        ValidationFailed(_) | ModelFault(_) | TerminalDataRefused(_) | NotOnBoundary { .. } | EmptyCandidates(_) => 2,
        _ => 1,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<hybridqvi::Error>() {
            return code_for(e);
        }
    }
    1
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("HYBRIDQVI_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::input(anyhow::anyhow!(
            "HYBRIDQVI_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    if n == 0 {
        return Err(Failure::input(anyhow::anyhow!("HYBRIDQVI_THREADS must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::input(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::SolveStationary(a) => commands::solve_stationary(a),
        Command::SolveFinite(a) => commands::solve_finite(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Convergence(a) => commands::convergence(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
