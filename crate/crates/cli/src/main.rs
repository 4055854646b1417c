//! `fiberspin`: stationary rotational spinning of viscous fibers from the
//! command line.
//!
//! Exit status: 0 success, 1 usage or validation error, 2 solver
//! non-convergence, 3 domain exit or missing bracket.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fiberspin::{Error, SpinParams};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NO_CONVERGENCE: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "fiberspin", version, about = "Stationary rotational spinning of slender viscous fibers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the viscous boundary value problem at one parameter point.
    Solve(SolveArgs),
    /// Integrate the inviscid limit as an initial value problem.
    Inviscid(InviscidArgs),
    /// Print the existence criterion and the bounds on q(0).
    Bounds(BoundsArgs),
    /// Solve every point of a parameter plan.
    Sweep(SweepArgs),
    /// Bracket the largest converging viscosity at fixed epsilon and kappa.
    Boundary(BoundaryArgs),
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// Rossby number.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: f64,
    /// Surface tension parameter, in [0, 1).
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    /// Fiber length L.
    #[arg(long, default_value_t = SpinParams::DEFAULT_LENGTH, allow_hyphen_values = true)]
    pub length: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Viscosity parameter 3/Re, > 0.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Collocation residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Write solution samples as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write centerline and speed plots.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Print a JSON report on stdout instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct InviscidArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Relative tolerance of the integrator.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Also integrate kappa = 0 and overlay it in the plots.
    #[arg(long)]
    pub compare_zero_kappa: bool,
    /// Write the trajectory as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the phase portrait and speed plots.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Plan file with `key = value` axis lines.
    #[arg(long)]
    pub plan: PathBuf,
    /// Overrides the plan's tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Overrides the plan's fiber length.
    #[arg(long, allow_hyphen_values = true)]
    pub length: Option<f64>,
    /// Overrides the plan's worker count; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Export records; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop wall-clock times (empty CSV column, zero in JSON) so exports are reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    /// Scatter of the outcomes over (kappa, delta/eps^2) with the criterion curve.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// q(0) against delta with the bound curves.
    #[arg(long)]
    pub svg_q0: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Width of the final bracket in delta.
    #[arg(long, default_value_t = 1e-3)]
    pub resolution: f64,
    /// Worker count; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub json: bool,
}

/// Exit status of a library error.
pub fn exit_status(e: &Error) -> u8 {
    match e {
        Error::Param(_) | Error::Plan(_) | Error::Io(_) => EXIT_USAGE,
        Error::NotConverged => EXIT_NO_CONVERGENCE,
        Error::Domain(_) | Error::Ivp(_) | Error::GuessFailure(_) | Error::Mesh(_) | Error::NoBracket(_) => {
            EXIT_DOMAIN
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Inviscid(a) => commands::inviscid(&a),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Boundary(a) => commands::boundary(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}
