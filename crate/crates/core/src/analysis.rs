//! Closed-form results for the stationary fiber and the classification of
//! computed solutions as physically relevant.
//!
//! A stationary solution is physically relevant when
//!
//! * (P1) `q0 = q(0)` lies in `(0, 1 - kappa]`,
//! * (P2) `u''(0) < 0`,
//! * (P3) the Lagrangian acceleration derivative satisfies `d²u_L/dt²(0) > 0`.

use serde::{Deserialize, Serialize};

use crate::bvp::MeshSolution;
use crate::error::{Error, ParamError};
use crate::model::{SpinParams, ViscousState};

/// Upper limit on `epsilon` for which the inviscid `u''(0)` is negative.
pub fn inviscid_epsilon_limit(kappa: f64) -> f64 {
    (1.0 - 0.25 * kappa).sqrt() / (1.0 + 0.5 * kappa)
}

fn check_kappa(kappa: f64) -> Result<(), ParamError> {
    if kappa.is_finite() && (0.0..1.0).contains(&kappa) {
        Ok(())
    } else {
        Err(ParamError::Kappa(kappa))
    }
}

/// `u''(0)` of the inviscid solution,
/// `(eps² (1 + kappa/2)² + kappa/4 - 1) / (eps⁴ (1 + kappa/2)³)`.
pub fn u_dd0_inviscid(epsilon: f64, kappa: f64) -> Result<f64, ParamError> {
    check_kappa(kappa)?;
    let limit = inviscid_epsilon_limit(kappa);
    if !(epsilon > 0.0 && epsilon < limit) {
        return Err(ParamError::Precondition(format!(
            "epsilon = {epsilon} must lie in (0, {limit}) for kappa = {kappa}"
        )));
    }
    let a = 1.0 + 0.5 * kappa;
    let e2 = epsilon * epsilon;
    Ok((e2 * a * a + 0.25 * kappa - 1.0) / (e2 * e2 * a * a * a))
}

/// Second flight-time derivative of the inviscid Lagrangian speed at `t = 0`,
/// `(1 + kappa/2)^{-3} [(1 + kappa/2)² / eps² + 3 kappa / (4 eps⁴)]`.
pub fn ul_dd0_inviscid(epsilon: f64, kappa: f64) -> Result<f64, ParamError> {
    check_kappa(kappa)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ParamError::Epsilon(epsilon));
    }
    let a = 1.0 + 0.5 * kappa;
    let e2 = epsilon * epsilon;
    Ok((a * a / e2 + 0.75 * kappa / (e2 * e2)) / (a * a * a))
}

/// `u'(0) = (1 - kappa - q0) / delta` for the viscous problem.
pub fn u_d0_viscous(q0: f64, params: &SpinParams) -> Result<f64, ParamError> {
    params.require_viscous()?;
    Ok((1.0 - params.kappa() - q0) / params.delta())
}

/// `u''(0) = [(2 - kappa/2 - q0)(1 - kappa - q0) - delta/eps²] / delta²`.
pub fn u_dd0_viscous(q0: f64, params: &SpinParams) -> Result<f64, ParamError> {
    params.require_viscous()?;
    let k = params.kappa();
    let d = params.delta();
    Ok(((2.0 - 0.5 * k - q0) * (1.0 - k - q0) - params.ratio()) / (d * d))
}

/// `d²u_L/dt²(0) = [(1 - kappa - q0)(3 - 3 kappa/2 - 2 q0) - delta/eps²] / delta²`.
pub fn ul_dd0_viscous(q0: f64, params: &SpinParams) -> Result<f64, ParamError> {
    params.require_viscous()?;
    let k = params.kappa();
    let d = params.delta();
    Ok(((1.0 - k - q0) * (3.0 - 1.5 * k - 2.0 * q0) - params.ratio()) / (d * d))
}

/// Chain rule for `ds/dt = u`: `d²u_L/dt² = u'' u² + u'² u`.
pub fn ul_dd_from_arc_length(u: f64, u_prime: f64, u_dd: f64) -> f64 {
    u_dd * u * u + u_prime * u_prime * u
}

/// Bounds on the initial internal energy `q0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q0Bounds {
    pub lower_raw: f64,
    pub upper_raw: f64,
    /// `max(0, lower_raw)`.
    pub lower: f64,
    /// `min(1, upper_raw)`.
    pub upper: f64,
}

impl Q0Bounds {
    /// An empty interval rules out physically relevant solutions.
    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn contains(&self, q0: f64) -> bool {
        self.lower <= q0 && q0 <= self.upper
    }
}

pub fn q0_bounds(params: &SpinParams) -> Q0Bounds {
    let k = params.kappa();
    let ratio = params.ratio();
    let a = 1.0 + 0.5 * k;
    let lower_raw = 0.5 * (3.0 - 1.5 * k - (a * a + 4.0 * ratio).sqrt());
    let upper_raw = 0.25 * (5.0 - 3.5 * k - (a * a + 8.0 * ratio).sqrt());
    Q0Bounds {
        lower_raw,
        upper_raw,
        lower: lower_raw.max(0.0),
        upper: upper_raw.min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Existence {
    MayExist,
    CannotExist,
}

impl Existence {
    pub fn label(&self) -> &'static str {
        match self {
            Existence::MayExist => "may_exist",
            Existence::CannotExist => "cannot_exist",
        }
    }
}

impl std::fmt::Display for Existence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Existence::MayExist => "MayExist",
            Existence::CannotExist => "CannotExist",
        })
    }
}

/// `p(kappa) = 3 (1 - 3 kappa / 2 + kappa² / 2)`.
pub fn p_kappa(kappa: f64) -> f64 {
    3.0 * (1.0 - 1.5 * kappa + 0.5 * kappa * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCriterion {
    pub p_kappa: f64,
    /// `delta / epsilon²`.
    pub ratio: f64,
    pub verdict: Existence,
}

/// No physically relevant solution exists once `delta / eps² >= p(kappa)`.
pub fn existence_criterion(params: &SpinParams) -> ExistenceCriterion {
    let p = p_kappa(params.kappa());
    let ratio = params.ratio();
    ExistenceCriterion {
        p_kappa: p,
        ratio,
        verdict: if ratio >= p {
            Existence::CannotExist
        } else {
            Existence::MayExist
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub q0: f64,
    /// `q0` in `(0, 1 - kappa]`.
    pub p1: bool,
    /// The equivalent form `u'(0) >= 0 && beta'(0) < 0` evaluated on the solution slopes.
    pub p1_slopes: bool,
    pub p2: bool,
    pub p3: bool,
    /// Slopes of the solution at `s = 0`.
    pub slope0: ViscousState,
    pub u_dd0_analytic: f64,
    pub ul_dd0_analytic: f64,
    /// Second derivative of the collocation polynomial at `s = 0`.
    pub u_dd0_numeric: f64,
    pub bounds: Q0Bounds,
    pub in_bounds: bool,
    pub criterion: ExistenceCriterion,
    /// Verdict of the corollary criterion on `delta / eps²`.
    pub existence: Existence,
    /// `CannotExist` when the `q0` bound interval is empty.
    pub existence_by_bounds: Existence,
}

impl ClassificationReport {
    pub fn physically_relevant(&self) -> bool {
        self.p1 && self.p2 && self.p3
    }

    pub fn p1_consistent(&self) -> bool {
        self.p1 == self.p1_slopes
    }
}

/// Classifies from initial data: `q0`, the slopes `(u', q', r', beta')` at
/// `s = 0` and a numerical `u''(0)`.
pub fn classify_initial_data(
    q0: f64,
    slope0: ViscousState,
    u_dd0_numeric: f64,
    params: &SpinParams,
) -> Result<ClassificationReport, Error> {
    let u_dd0 = u_dd0_viscous(q0, params)?;
    let ul_dd0 = ul_dd0_viscous(q0, params)?;
    let bounds = q0_bounds(params);
    let criterion = existence_criterion(params);
    Ok(ClassificationReport {
        q0,
        p1: q0 > 0.0 && q0 <= 1.0 - params.kappa(),
        p1_slopes: slope0.u >= 0.0 && slope0.beta < 0.0,
        p2: u_dd0 < 0.0,
        p3: ul_dd0 > 0.0,
        slope0,
        u_dd0_analytic: u_dd0,
        ul_dd0_analytic: ul_dd0,
        u_dd0_numeric,
        bounds,
        in_bounds: bounds.contains(q0),
        criterion,
        existence: criterion.verdict,
        existence_by_bounds: if bounds.is_empty() {
            Existence::CannotExist
        } else {
            Existence::MayExist
        },
    })
}

/// Classifies a converged viscous solution.
pub fn classify(solution: &MeshSolution, params: &SpinParams) -> Result<ClassificationReport, Error> {
    if !solution.converged() {
        return Err(Error::NotConverged);
    }
    if solution.dim() != ViscousState::DIM {
        return Err(Error::Mesh(format!(
            "expected a 4-component solution, got {}",
            solution.dim()
        )));
    }
    let s0 = solution.mesh().start();
    let q0 = solution.left()[1];
    let slope0 = ViscousState::from_slice(&solution.derivative(s0));
    let u_dd0_numeric = solution.second_derivative(s0)[0];
    classify_initial_data(q0, slope0, u_dd0_numeric, params)
}
