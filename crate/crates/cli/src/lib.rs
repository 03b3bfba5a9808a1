//! Argument parsing, dispatch and exit codes for the `ergomap` binary.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ergomap::family::MapFamily;
use ergomap::family_file::{parse_family_file, FamilyFileError};
use ergomap::gallery;

mod commands;
pub mod render;

pub use commands::{expand_demo, BranchDemo, ExpandDemo};

/// Exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    Io = 1,
    Usage = 2,
    Parse = 3,
    Semantic = 4,
    Infeasible = 5,
    CheckFailed = 6,
    Numerical = 7,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug)]
pub enum CliError {
    Io { path: Option<PathBuf>, source: io::Error },
    Usage(String),
    File(FamilyFileError),
    Map(ergomap::Error),
    Csv(csv::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io { path: Some(p), source } => write!(f, "{}: {source}", p.display()),
            CliError::Io { path: None, source } => write!(f, "{source}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::File(e) => write!(f, "{e}"),
            CliError::Map(e) => write!(f, "{e}"),
            CliError::Csv(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<io::Error> for CliError {
    fn from(source: io::Error) -> Self {
        CliError::Io { path: None, source }
    }
}

impl From<ergomap::Error> for CliError {
    fn from(e: ergomap::Error) -> Self {
        CliError::Map(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}

fn map_status(e: &ergomap::Error) -> Status {
    use ergomap::Error as E;
    match e {
        E::InvalidMap(_) | E::ParameterOutOfRange { .. } | E::Precondition(_) => Status::Semantic,
        E::Infeasible(_) | E::CaseUnstable { .. } | E::ScaleTooLarge { .. } => Status::Infeasible,
        E::NotCoveringWithin { .. } | E::MissingCounterpart(_) => Status::CheckFailed,
        E::BreakpointHit { .. }
        | E::OrbitTruncated { .. }
        | E::CellCountExceeded { .. }
        | E::RootSolveFailure { .. }
        | E::NonSmoothPoint { .. }
        | E::NonConvergence { .. } => Status::Numerical,
    }
}

impl CliError {
    pub fn status(&self) -> Status {
        match self {
            CliError::Io { .. } | CliError::Csv(_) => Status::Io,
            CliError::Usage(_) => Status::Usage,
            CliError::File(FamilyFileError::Semantic(e)) => map_status(e),
            CliError::File(_) => Status::Parse,
            CliError::Map(e) => map_status(e),
        }
    }
}

/// Default tolerances, selectable with `--profile` or the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Profile {
    Strict,
    #[default]
    Standard,
    Loose,
}

impl Profile {
    /// KS threshold for sweeps.
    pub fn threshold(self) -> f64 {
        match self {
            Profile::Strict => 0.01,
            Profile::Standard => 0.02,
            Profile::Loose => 0.05,
        }
    }

    /// `γ` in `γ ≤ φ ≤ 1/γ`.
    pub fn gamma(self) -> f64 {
        match self {
            Profile::Strict => 1e-2,
            Profile::Standard => 1e-3,
            Profile::Loose => 1e-4,
        }
    }
}

/// Checks for piecewise expanding interval map families.
#[derive(Debug, Parser)]
#[command(name = "ergomap", version, about)]
pub struct Cli {
    /// Default tolerance profile.
    #[arg(long, global = true, value_enum, env = "ERGOMAP_TOLERANCE_PROFILE", default_value_t = Profile::Standard)]
    pub profile: Profile,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every hypothesis check on a family and emit a JSON report.
    Check(CheckArgs),
    /// Ulam density of one map as two columns `x φ(x)`.
    Density(DensityArgs),
    /// Compare orbit histograms with Ulam densities across the parameter interval.
    Sweep(SweepArgs),
    /// Nested symbolic dynamics for the expanded perturbation of a family.
    Nested(NestedArgs),
    /// Graphs of `T_a` and `E_s T_a` as gnuplot data blocks.
    ExpandDemo(ExpandArgs),
    /// Bundled families.
    Examples {
        #[command(subcommand)]
        action: ExamplesAction,
    },
}

/// A family file path, or the name of a bundled family.
#[derive(Debug, Clone, Args)]
pub struct FamilyArg {
    pub family: String,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub family: FamilyArg,
    /// Parameters checked, endpoints included.
    #[arg(long, default_value_t = 33, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub grid: u32,
    /// Ulam bins for the density bounds.
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u32).range(2..=1 << 22))]
    pub bins: u32,
    /// Density bound `γ`; defaults to the profile value.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Largest iterate tried by the large-image check.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub m_max: u32,
    /// Window half-width `δ`; defaults to the largest admissible value.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Iterate used by the derivative-growth check.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(0..=40))]
    pub j0: u32,
    /// Iterates tried by the weak covering check.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub n_max: u32,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print a table instead of JSON.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub family: FamilyArg,
    #[arg(long, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u32).range(2..=1 << 22))]
    pub bins: u32,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub family: FamilyArg,
    /// Number of midpoint parameters.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..=100_000))]
    pub grid: u32,
    /// Orbit length after burn-in.
    #[arg(long, default_value_t = 200_000, value_parser = clap::value_parser!(u64).range(1..=100_000_000))]
    pub n: u64,
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u32).range(2..=1 << 22))]
    pub bins: u32,
    /// KS threshold; defaults to the profile value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = ergomap::typicality::DEFAULT_SEED)]
    pub seed: u64,
    /// Per-step orbit noise.
    #[arg(long, default_value_t = ergomap::typicality::DEFAULT_JITTER)]
    pub jitter: f64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary destination; standard error when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NestedArgs {
    #[command(flatten)]
    pub family: FamilyArg,
    /// Base parameter; defaults to the left end of the interval.
    #[arg(long, allow_negative_numbers = true)]
    pub a0: Option<f64>,
    /// Scale rate; defaults to `2α₀`.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Offset of the smaller parameter from `a0`.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Offset of the larger parameter from `a0`; defaults to half the window.
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=40))]
    pub depth: u32,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub family: FamilyArg,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = 1.2)]
    pub s: f64,
    /// Points per branch graph.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(2..=100_000))]
    pub samples: u32,
    /// Branch images as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ExamplesAction {
    /// Names and one-line descriptions.
    List,
    /// Print a bundled family file.
    Emit { name: String },
}

/// Reads a family from a file, falling back to the bundled family of that name.
pub fn load_family(arg: &str) -> Result<MapFamily, CliError> {
    let path = Path::new(arg);
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => match gallery::source(arg) {
            Some(t) => t.to_string(),
            None => {
                return Err(CliError::Io {
                    path: Some(path.to_path_buf()),
                    source: e,
                })
            }
        },
        Err(e) => {
            return Err(CliError::Io {
                path: Some(path.to_path_buf()),
                source: e,
            })
        }
    };
    parse_family_file(&text).map_err(CliError::File)
}

pub(crate) fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > lo && v < hi {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} = {v} must lie in ({lo}, {hi})")))
    }
}

/// Writes to `path`, or to `fallback` when no path is given.
pub(crate) fn emit(path: &Option<PathBuf>, fallback: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Io {
            path: Some(p.clone()),
            source,
        }),
        None => Ok(fallback.write_all(bytes)?),
    }
}

/// Run one command; reports go to `out` (and `err` for secondary output).
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status, CliError> {
    match &cli.command {
        Command::Check(a) => commands::check(cli.profile, a, out),
        Command::Density(a) => commands::density(a, out),
        Command::Sweep(a) => commands::sweep(cli.profile, a, out, err),
        Command::Nested(a) => commands::nested(a, out),
        Command::ExpandDemo(a) => commands::expand(a, out),
        Command::Examples { action } => commands::examples(action, out),
    }
}
