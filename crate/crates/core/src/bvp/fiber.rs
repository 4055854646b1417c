use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, MeshSolution};
use super::solver::{solve_bvp, BvpOptions, BvpSystem, ContinuationStep, Outcome, SolveReport};
use crate::error::{DomainError, Error};
use crate::ivp::{integrate, IvpConfig, Trajectory};
use crate::model::{
    bc_residual_viscous, bc_right_gradient, jacobian_viscous, rhs_inviscid, rhs_viscous,
    InviscidState, SpinParams, ViscousState, Q_MIN, U_MIN,
};

/// The viscous stationary fiber as a boundary value problem in `(u, q, r, beta)`.
///
/// Admissible states have `u > 0`, `q > 0` and `r > 0`; Newton iterates
/// outside that region are rejected by the line search.
#[derive(Debug, Clone, Copy)]
pub struct FiberSystem {
    params: SpinParams,
}

impl FiberSystem {
    pub fn new(params: SpinParams) -> Result<Self, Error> {
        params.require_viscous()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SpinParams {
        &self.params
    }
}

impl BvpSystem for FiberSystem {
    fn dim(&self) -> usize {
        ViscousState::DIM
    }

    fn left_bc_count(&self) -> usize {
        3
    }

    fn rhs(&self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DomainError> {
        let d = rhs_viscous(&ViscousState::from_slice(y), &self.params)?;
        dy.copy_from_slice(&d.to_array());
        Ok(())
    }

    fn jacobian(&self, _s: f64, y: &[f64], jac: &mut [f64]) -> Result<(), DomainError> {
        let j = jacobian_viscous(&ViscousState::from_slice(y), &self.params)?;
        for (r, row) in j.iter().enumerate() {
            jac[4 * r..4 * r + 4].copy_from_slice(row);
        }
        Ok(())
    }

    fn bc_residual(&self, left: &[f64], right: &[f64], res: &mut [f64]) -> Result<(), DomainError> {
        let r = bc_residual_viscous(
            &ViscousState::from_slice(left),
            &ViscousState::from_slice(right),
            &self.params,
        )?;
        res.copy_from_slice(&r);
        Ok(())
    }

    fn bc_jacobian(
        &self,
        _left: &[f64],
        right: &[f64],
        d_left: &mut [f64],
        d_right: &mut [f64],
    ) -> Result<(), DomainError> {
        let right = ViscousState::from_slice(right);
        if !(right.u > 0.0) {
            return Err(DomainError::NonPositiveSpeed(right.u));
        }
        d_left.fill(0.0);
        d_right.fill(0.0);
        // u(0) - 1, r(0) - 1, beta(0)
        d_left[0] = 1.0;
        d_left[4 + 2] = 1.0;
        d_left[8 + 3] = 1.0;
        d_right[12..16].copy_from_slice(&bc_right_gradient(&right, &self.params));
        Ok(())
    }

    fn admissible(&self, y: &[f64]) -> Result<(), DomainError> {
        if !(y[0] > U_MIN) {
            return Err(DomainError::NonPositiveSpeed(y[0]));
        }
        if !(y[1] > Q_MIN) {
            return Err(DomainError::VanishingEnergy(y[1]));
        }
        if !(y[2] > 0.0) {
            return Err(DomainError::NonPositiveRadius(y[2]));
        }
        Ok(())
    }
}

pub const DEFAULT_GUESS_INTERVALS: usize = 32;

/// Integrates the inviscid reduced system in `(v, r, beta)` over `[0, L]`.
pub fn integrate_inviscid(params: &SpinParams, cfg: &IvpConfig) -> Result<Trajectory, Error> {
    let p = *params;
    let traj = integrate(
        move |_s, y: &[f64], dy: &mut [f64]| {
            let d = rhs_inviscid(&InviscidState::from_slice(y), &p)?;
            dy.copy_from_slice(&d.to_array());
            Ok(())
        },
        &InviscidState::nozzle(params).to_array(),
        (0.0, params.length()),
        cfg,
    )?;
    Ok(traj)
}

fn guess_ivp_config() -> IvpConfig {
    IvpConfig::with_tolerances(1e-11, 1e-13)
}

/// Initial guess from the inviscid solution on a uniform mesh.
///
/// Euler variables follow from `u = v / epsilon` and `q = u - kappa / sqrt(u)`.
pub fn inviscid_guess(params: &SpinParams) -> Result<MeshSolution, Error> {
    inviscid_guess_on(params, DEFAULT_GUESS_INTERVALS)
}

pub fn inviscid_guess_on(params: &SpinParams, intervals: usize) -> Result<MeshSolution, Error> {
    let traj = integrate_inviscid(params, &guess_ivp_config())?;
    if let Some(stop) = traj.domain_stop() {
        return Err(Error::GuessFailure(format!(
            "inviscid trajectory left its domain at s = {} ({})",
            stop.at, stop.error
        )));
    }
    let mesh = Mesh::uniform(0.0, params.length(), intervals)?;
    let eps = params.epsilon();
    let kappa = params.kappa();
    MeshSolution::from_fn(mesh, ViscousState::DIM, |s| {
        let inv = InviscidState::from_slice(&traj.evaluate(s)?);
        let d = rhs_inviscid(&inv, params)?;
        let state = inv.to_viscous(params);
        let du = d.v / eps;
        let dq = du * (1.0 + 0.5 * kappa * state.u.powf(-1.5));
        Ok((state.to_array().to_vec(), vec![du, dq, d.r, d.beta]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub bvp: BvpOptions,
    /// First viscosity of the continuation path.
    pub delta_start: f64,
    /// The continuation gives up once its step drops below this fraction of the target.
    pub step_min_fraction: f64,
    /// After a failed step the continuation stops if the last converged
    /// q(0) is below this value: the branch has reached q(0) = 0, the edge
    /// of the admissible region, and cannot be continued to larger delta.
    pub q0_floor: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            bvp: BvpOptions::default(),
            delta_start: 1e-3,
            step_min_fraction: 1e-6,
            q0_floor: 1e-4,
        }
    }
}

impl ContinuationOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            bvp: BvpOptions::with_tol(tol),
            ..Self::default()
        }
    }
}

fn solve_at(params: &SpinParams, guess: &MeshSolution, opts: &BvpOptions) -> SolveReport {
    match FiberSystem::new(*params) {
        Ok(system) => solve_bvp(&system, guess, opts),
        Err(e) => SolveReport::failed(Outcome::NoConvergence(e.to_string())),
    }
}

/// Solves the viscous problem at `params`, marching `delta` up from
/// `opts.delta_start` when a direct solve from the inviscid guess fails.
///
/// Every attempted `delta` is recorded in the continuation trace.
pub fn continuation_solve(
    params: &SpinParams,
    opts: &ContinuationOptions,
) -> Result<SolveReport, Error> {
    params.require_viscous()?;
    let target = params.delta();
    let guess = inviscid_guess(params)?;
    let mut trace = Vec::new();

    let direct = solve_at(params, &guess, &opts.bvp);
    trace.push(ContinuationStep {
        delta: target,
        outcome: direct.outcome.clone(),
    });
    if direct.is_converged() || target <= opts.delta_start {
        return Ok(SolveReport {
            continuation_trace: trace,
            ..direct
        });
    }

    let mut current = opts.delta_start;
    let first = solve_at(&params.with_delta(current)?, &guess, &opts.bvp);
    trace.push(ContinuationStep {
        delta: current,
        outcome: first.outcome.clone(),
    });
    let Some(mut solution) = first.solution else {
        return Ok(SolveReport {
            outcome: first.outcome,
            solution: None,
            continuation_trace: trace,
        });
    };

    let step_min = opts.step_min_fraction * target;
    // Guesses along the path are converged, adapted solutions; refining
    // their mesh uniformly after a failure does not help.
    let step_opts = BvpOptions {
        max_restarts: 0,
        ..opts.bvp
    };
    let mut step = current;
    let mut just_failed = false;
    loop {
        let next = (current + step).min(target);
        let report = solve_at(&params.with_delta(next)?, &solution, &step_opts);
        trace.push(ContinuationStep {
            delta: next,
            outcome: report.outcome.clone(),
        });
        match report.solution {
            Some(sol) if report.outcome.is_converged() => {
                current = next;
                solution = sol;
                if current >= target {
                    return Ok(SolveReport {
                        outcome: Outcome::Converged,
                        solution: Some(solution),
                        continuation_trace: trace,
                    });
                }
                // The step grows again only after a success that did not follow a failure.
                if !just_failed {
                    step = (2.0 * step).min(current);
                }
                just_failed = false;
            }
            _ => {
                just_failed = true;
                let q0 = solution.left()[1];
                if q0 < opts.q0_floor {
                    return Ok(SolveReport {
                        outcome: Outcome::NoConvergence(format!(
                            "branch ends at delta = {current:.9} with q(0) = {q0:.3e} (last failure: {})",
                            report.outcome
                        )),
                        solution: None,
                        continuation_trace: trace,
                    });
                }
                step = 0.5 * (next - current);
                if step < step_min {
                    return Ok(SolveReport {
                        outcome: Outcome::NoConvergence(format!(
                            "continuation step underflow at delta = {current:.9} (last failure: {})",
                            report.outcome
                        )),
                        solution: None,
                        continuation_trace: trace,
                    });
                }
            }
        }
    }
}
