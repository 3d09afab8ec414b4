//! `minsurf`: batch driver for the minimal-surface pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Version tag carried by every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "minsurf", version, about = "Cosh-Gordon minimal surfaces in hyperbolic space: solve, detect, deform, flow, verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the invariant solution g'' = 2cosh(2g), g(0) = v0, g'(0) = 0.
    Ode(OdeArgs),
    /// Newton solve of Δu = 2cosh(2u) on a periodic strip with invariant boundary data.
    Solve(SolveArgs),
    /// Detect and classify the zero locus of a surface.
    Zlocus(ZlocusArgs),
    /// Build the deformation function for a surface.
    Deform(DeformArgs),
    /// Flow a surface along its normal by t·f.
    Flow(FlowArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
    /// Principal curvature sweep under the point deformation of the invariant model.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    /// Cauchy value g(0); must be non-negative.
    #[arg(long, allow_negative_numbers = true, value_parser = non_negative)]
    pub v0: f64,
    /// Local error tolerance of the integrator.
    #[arg(long, default_value_t = 1e-10, value_parser = positive)]
    pub tol: f64,
    /// Bound on the first-integral residual (default 100·tol).
    #[arg(long, value_parser = positive)]
    pub residual_tol: Option<f64>,
    /// Integrate up to this fraction of the maximal half-width.
    #[arg(long, default_value_t = 0.9, value_parser = unit_fraction)]
    pub fraction: f64,
    /// Write the accepted samples as `x,g,dg` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Sample u(x, y) = g(|x|) on a grid and write it as a scalar CSV.
    #[arg(long)]
    pub surface_out: Option<PathBuf>,
    /// Half-width of the sampled grid.
    #[arg(long, default_value_t = 0.25, value_parser = positive)]
    pub grid_half_width: f64,
    /// Node spacing of the sampled grid.
    #[arg(long, default_value_t = 1.0 / 64.0, value_parser = positive)]
    pub grid_h: f64,
    /// Sample on the cylinder [-w, w] × (ℝ / 2w) instead of the square [-w, w]².
    #[arg(long)]
    pub periodic: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Nodes across the strip.
    #[arg(long, default_value_t = 65, value_parser = clap::value_parser!(u64).range(3..))]
    pub nx: u64,
    /// Nodes around the period (spacing equals the x-spacing).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(3..))]
    pub ny: u64,
    /// Strip width.
    #[arg(long, default_value_t = 0.8, value_parser = positive)]
    pub width: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true, value_parser = non_negative)]
    pub v0: f64,
    /// Newton residual tolerance.
    #[arg(long, default_value_t = 1e-10, value_parser = positive)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1.0, value_parser = unit_fraction)]
    pub damping: f64,
    /// Output CSV for u.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZlocusArgs {
    /// Scalar CSV with the conformal factor u.
    #[arg(long)]
    pub surface: PathBuf,
    /// Nodes with u ≤ tol-z belong to Z.
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    pub tol_z: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[arg(long)]
    pub surface: PathBuf,
    /// Radius of the neighbourhoods of Z carrying the deformation.
    #[arg(long, value_parser = positive)]
    pub r: f64,
    /// Output CSV for f.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    pub tol_z: f64,
    /// Bound on the sign residuals of the Hessian of f on Z.
    #[arg(long, default_value_t = 1e-2, value_parser = positive)]
    pub sign_tol: f64,
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub surface: PathBuf,
    /// Scalar CSV with the normal speed f (constant 1 when absent).
    #[arg(long)]
    pub f: Option<PathBuf>,
    /// Flow time.
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// Output immersion CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Bound on the drift of the hyperboloid constraints.
    #[arg(long, default_value_t = minsurf::immersion::TOL_DRIFT, value_parser = positive)]
    pub drift_tol: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Halve the grid spacings of the convergence criteria.
    #[arg(long)]
    pub halve_grid: bool,
    /// Seed of the randomised criteria.
    #[arg(long, default_value_t = minsurf::acceptance::AcceptanceConfig::default().seed)]
    pub seed: u64,
    /// Run only these criteria (comma separated ids).
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=minsurf::acceptance::CRITERIA as i64))]
    pub criteria: Vec<u8>,
    /// Surface CSV to validate before running the suite.
    #[arg(long)]
    pub surface: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Coarse grid spacing; principal curvatures are extrapolated from h and h/2.
    #[arg(long, default_value_t = 1.0 / 64.0, value_parser = positive)]
    pub h: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {v}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    let v = positive(s)?;
    if v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {v}"))
    }
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// A residual or check exceeded its bound (exit 1).
    Verification(String),
    /// Newton did not converge (exit 2).
    Divergence(String),
    /// Bad invocation or environment (exit 64).
    Usage(String),
    /// Any other runtime error (exit 1).
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) | Failure::Runtime(_) => 1,
            Failure::Divergence(_) => 2,
            Failure::Usage(_) => 64,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Divergence(m) => write!(f, "solver diverged: {m}"),
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MINSURF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("MINSURF_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// The derived command with `-h`/`-V` replaced by long-only `--help`/`--version`.
fn long_only_command() -> clap::Command {
    Cli::command()
        .disable_help_flag(true)
        .disable_version_flag(true)
        .disable_help_subcommand(true)
        .arg(Arg::new("help").long("help").action(ArgAction::Help).global(true).help("Print help"))
        .arg(Arg::new("version").long("version").action(ArgAction::Version).help("Print version"))
        .mut_subcommands(|c| c.disable_help_flag(true))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match long_only_command().try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    let result = configure_threads().and_then(|_| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("minsurf: {f}");
            ExitCode::from(f.code())
        }
    }
}
