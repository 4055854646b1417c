//! Polynomial collocation for two-point boundary value problems and its
//! application to the viscous fiber.

mod condensed;
mod fiber;
pub mod lobatto;
mod mesh;
mod solver;

pub use fiber::{
    continuation_solve, integrate_inviscid, inviscid_guess, inviscid_guess_on,
    ContinuationOptions, FiberSystem, DEFAULT_GUESS_INTERVALS,
};
pub use mesh::{Mesh, MeshSolution, MIN_INTERVALS};
pub use solver::{
    solve_bvp, BvpOptions, BvpSystem, ContinuationStep, Outcome, SolveReport,
};
