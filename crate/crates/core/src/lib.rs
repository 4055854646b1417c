//! Stationary rotational spinning of slender viscous fibers with surface tension.
//!
//! The crate solves the stationary one-dimensional fiber equations as a
//! boundary value problem, evaluates the closed-form bounds on the initial
//! internal energy `q(0)`, and maps the parameter region where physically
//! relevant stationary solutions exist.
//!
//! ```no_run
//! use fiberspin::{analysis, bvp, SpinParams};
//!
//! let params = SpinParams::new(0.1, 0.25, 0.1, 1.0)?;
//! let report = bvp::continuation_solve(&params, &bvp::ContinuationOptions::default())?;
//! if let Some(solution) = &report.solution {
//!     let class = analysis::classify(solution, &params)?;
//!     println!("q0 = {:.4}, physically relevant: {}", class.q0, class.physically_relevant());
//! }
//! # Ok::<(), fiberspin::Error>(())
//! ```

pub mod analysis;
pub mod banded;
pub mod bvp;
pub mod error;
pub mod ivp;
pub mod model;
pub mod sweep;

pub use error::{DomainError, Error, IvpError, ParamError, Result};
pub use model::{
    InviscidState, LagrangianState, SpinParams, ViscousState,
};
