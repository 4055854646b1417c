use thiserror::Error;

/// An evaluation left the region where the fiber equations are defined.
///
/// The BVP Newton loop treats this as a signal to damp the step, not as a
/// hard failure.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("speed u = {0} is not positive")]
    NonPositiveSpeed(f64),
    #[error("internal energy q = {0} is too close to zero")]
    VanishingEnergy(f64),
    #[error("radius r = {0} is not positive")]
    NonPositiveRadius(f64),
    #[error("denominator v - lambda/sqrt(v) = {0} is not positive")]
    InviscidSingular(f64),
    #[error("non-finite value encountered")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("delta must be finite and >= 0, got {0}")]
    Delta(f64),
    #[error("epsilon must be finite and > 0, got {0}")]
    Epsilon(f64),
    #[error(
        "kappa must lie in [0, 1), got {0}: physically relevant solutions require 0 <= kappa < 1"
    )]
    Kappa(f64),
    #[error("fiber length must be finite and > 0, got {0}")]
    Length(f64),
    #[error("delta must be > 0 for the viscous problem")]
    Inviscid,
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvpError {
    #[error("step budget of {0} steps exceeded")]
    StepBudgetExceeded(usize),
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("point {0} lies outside the integrated span")]
    OutOfSpan(f64),
    #[error("invalid integrator input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Ivp(#[from] IvpError),
    #[error("inviscid guess failed: {0}")]
    GuessFailure(String),
    #[error("solution is not converged")]
    NotConverged,
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("no bracket: {0}")]
    NoBracket(String),
    #[error("invalid sweep plan: {0}")]
    Plan(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
