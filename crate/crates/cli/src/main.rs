mod commands;
mod model_io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gaplab_core::hamiltonian::Caps;
use gaplab_core::GapError;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECTED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_IO: u8 = 3;

const DENSE_CAP_ENV: &str = "GAPLAB_DENSE_CAP";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// ClassA membership, conditions and fixed-point summary.
    Validate,
    /// Spectral-gap certificate and exact-gap comparison.
    Certify,
    /// Edge and bulk state diagnostics with CSV series.
    States,
    /// Print a builtin model as a model file.
    Example,
    /// Fixed points and transfer spectrum.
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Certify => "certify",
            Command::States => "states",
            Command::Example => "example",
            Command::Export => "export",
        }
    }
}

/// Spectral-gap toolkit for matrix-product parent Hamiltonians.
#[derive(Debug, Parser)]
#[command(name = "gaplab", version)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Model file path, or builtin:kappa, builtin:kappa(n0,kR,kL,kappa,n), builtin:aklt, builtin:product.
    #[arg(long)]
    pub model: String,
    /// Interaction length (1..=16).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub m: Option<u32>,
    /// Certificate length for certify, window length for states (1..=16).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub l: Option<u32>,
    /// Largest chain size or N range end (1..=24).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=24))]
    pub nmax: Option<u32>,
    /// Seed for sampled checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for report.json and CSV series.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: message.into() }
    }

    pub fn rejected(message: impl Into<String>) -> Self {
        CliError { code: EXIT_REJECTED, message: message.into() }
    }
}

impl From<GapError> for CliError {
    fn from(e: GapError) -> Self {
        match e {
            GapError::Shape(_) | GapError::Parameter(_) | GapError::Precondition(_) => CliError::input(e.to_string()),
            _ => CliError::rejected(e.to_string()),
        }
    }
}

fn dense_cap() -> Result<Caps, CliError> {
    let mut caps = Caps::default();
    if let Ok(raw) = std::env::var(DENSE_CAP_ENV) {
        caps.dense_matrix = match raw.trim().parse::<usize>() {
            Ok(v) if v > 0 => v,
            _ => return Err(CliError::input(format!("{DENSE_CAP_ENV}: '{raw}' is not a positive integer"))),
        };
    }
    Ok(caps)
}

fn run(args: &Args) -> Result<u8, CliError> {
    let caps = dense_cap()?;
    let model = model_io::load(&args.model)?;
    if args.command == Command::Example {
        return commands::example(&model, args);
    }
    let outcome = match args.command {
        Command::Validate => commands::validate(&model, args, caps)?,
        Command::Certify => commands::certify(&model, args, caps)?,
        Command::States => commands::states(&model, args, caps)?,
        Command::Export => commands::export(&model, args, caps)?,
        Command::Example => unreachable!(),
    };
    outcome.emit(args)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("gaplab: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
