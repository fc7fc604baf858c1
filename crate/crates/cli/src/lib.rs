//! The `saddlekit` command-line tool.
//!
//! Machine output (JSON or CSV) goes to `--out` when given, otherwise to
//! standard output; the human summary goes to standard output when `--out`
//! is given, otherwise to standard error.
//!
//! Exit codes: 0 success, 2 success with warnings (inconclusive checks),
//! 1 failed checks or errors, 64 usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saddlekit::paramlab::Profile;
use saddlekit::Player;

pub mod commands;
pub mod gamefile;
pub mod output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_WARNINGS: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "saddlekit", version, about = "Zero-sum games with noncompact action sets and unbounded payoffs")]
pub struct Cli {
    /// Seed for randomized checks; recorded in every output header.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write machine output to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a finite matrix game read from a file or `-` for stdin.
    Matrix(MatrixArgs),
    /// Compute an approximate saddle point of a continuous game.
    Solve(SolveArgs),
    /// Minimax of a one-step game with perfect information.
    Turnbased(TurnbasedArgs),
    /// Value function and semicontinuity diagnostics of a family of games.
    Sweep(SweepArgs),
    /// Decide whether a strategy has a defined expected payoff against every opponent.
    Safety(SafetyArgs),
    /// Probe growth of the payoff along unbounded ends of the action sets.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Lp,
    Fp,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    pub input: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Method::Lp)]
    pub method: Method,
    /// Fictitious-play iterations.
    #[arg(long, default_value_t = 200_000)]
    pub iters: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub game: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 12)]
    pub max_refine: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TurnbasedArgs {
    pub game: PathBuf,
    #[arg(long, conflicts_with = "x_grid", allow_hyphen_values = true)]
    pub x: Option<f64>,
    /// `lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub x_grid: Option<String>,
    /// Also check pure-strategy sufficiency with this many mixed samples.
    #[arg(long)]
    pub sufficiency: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tie_tol: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub game: PathBuf,
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Overrides the grid of the game file, `lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub x_grid: Option<String>,
    #[arg(long, default_value_t = 12)]
    pub max_refine: usize,
    /// States probed by the assumption classifier.
    #[arg(long, default_value_t = 9)]
    pub probes: usize,
    /// Also write the value table as CSV to this file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SafetyArgs {
    pub game: PathBuf,
    /// Strategy JSON, or `@FILE`.
    #[arg(long)]
    pub strategy: String,
    /// Owner of the strategy.
    #[arg(long)]
    pub side: Player,
    #[arg(long, default_value_t = saddlekit::measures::DEFAULT_PROBES)]
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeSide {
    A,
    B,
    Both,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    pub game: PathBuf,
    #[arg(long, value_enum, default_value_t = ProbeSide::Both)]
    pub side: ProbeSide,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub machine: String,
    pub summary: String,
    pub code: i32,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("SADDLEKIT_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::execute(&cli)),
            Err(e) => Err(CliError::Failed(e.to_string())),
        },
        None => commands::execute(&cli),
    };
    match result {
        Ok(outcome) => match emit(&cli, &outcome) {
            Ok(()) => outcome.code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_FAILED
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("Run `saddlekit --help` for usage.");
            }
            e.code()
        }
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> std::io::Result<()> {
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &outcome.machine)?;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(outcome.summary.as_bytes())?;
            stdout.flush()
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(outcome.machine.as_bytes())?;
            stdout.flush()?;
            eprint!("{}", outcome.summary);
            Ok(())
        }
    }
}
