//! `mcode`: simulate conditional outliers, fit models, run detection
//! experiments and re-score saved artifacts.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcode::{ErrorKind, McodeError};

use commands::EvalArgs;
use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "mcode", version, about = "Multivariate conditional outlier detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inject conditional outliers; writes perturbed.csv and perturbation.json.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit full-conditional and/or independent models and save them.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the repeated contamination experiment and write scores and reports.
    Detect {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute ATPAR for saved rho matrices or score tables.
    Eval(EvalArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(McodeError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Core(McodeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<McodeError> for CliError {
    fn from(e: McodeError) -> Self {
        CliError::Core(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { run, out } => commands::simulate(&run.resolve()?, &out),
        Command::Fit { run, out } => commands::fit(&run.resolve()?, &out),
        Command::Detect { run, out } => commands::detect(&run.resolve()?, &out),
        Command::Eval(args) => commands::eval(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcode: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
