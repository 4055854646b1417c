//! Stationary equations of a rotationally spun viscous fiber.
//!
//! Three formulations share the same dimensionless parameters:
//!
//! * the viscous Euler-frame system in `(u, q, r, beta)` over arc length `s`,
//! * the inviscid reduced system in `(v, r, beta)` with `v = epsilon * u`,
//! * the Lagrangian system over particle flight time `t` with `ds/dt = u`.
//!
//! All state is stored in Euler-frame variables; the rescaled inviscid form is
//! only used to build initial guesses.

mod centerline;

pub use centerline::{reconstruct_centerline, Centerline, CenterlineSample};

use serde::{Deserialize, Serialize};

use crate::error::{DomainError, ParamError};

/// Smallest speed accepted by the right-hand sides.
pub const U_MIN: f64 = 1e-12;
/// Smallest `|q|` accepted by the right-hand sides.
pub const Q_MIN: f64 = 1e-12;

/// Dimensionless parameter set of one spinning configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    delta: f64,
    epsilon: f64,
    kappa: f64,
    length: f64,
}

impl SpinParams {
    pub const DEFAULT_LENGTH: f64 = 1.0;

    pub fn new(delta: f64, epsilon: f64, kappa: f64, length: f64) -> Result<Self, ParamError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(ParamError::Delta(delta));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ParamError::Epsilon(epsilon));
        }
        if !(kappa.is_finite() && (0.0..1.0).contains(&kappa)) {
            return Err(ParamError::Kappa(kappa));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(ParamError::Length(length));
        }
        Ok(Self {
            delta,
            epsilon,
            kappa,
            length,
        })
    }

    /// Viscosity parameter `3 / Re`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Rossby number.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Surface tension parameter.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Fiber arc length.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Surface tension in the rescaled inviscid variables, `epsilon^{3/2} kappa`.
    pub fn lambda(&self) -> f64 {
        self.epsilon.powf(1.5) * self.kappa
    }

    /// The ratio `delta / epsilon^2` that governs existence.
    pub fn ratio(&self) -> f64 {
        self.delta / (self.epsilon * self.epsilon)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, ParamError> {
        Self::new(delta, self.epsilon, self.kappa, self.length)
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self, ParamError> {
        Self::new(self.delta, self.epsilon, kappa, self.length)
    }

    pub(crate) fn require_viscous(&self) -> Result<(), ParamError> {
        if self.delta > 0.0 {
            Ok(())
        } else {
            Err(ParamError::Inviscid)
        }
    }
}

/// State `(u, q, r, beta)` of the viscous Euler-frame system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViscousState {
    pub u: f64,
    pub q: f64,
    pub r: f64,
    pub beta: f64,
}

impl ViscousState {
    pub const DIM: usize = 4;

    pub fn new(u: f64, q: f64, r: f64, beta: f64) -> Self {
        Self { u, q, r, beta }
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self::new(y[0], y[1], y[2], y[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.u, self.q, self.r, self.beta]
    }

    /// Cross-sectional area; mass flux `A u = 1`.
    pub fn area(&self) -> f64 {
        1.0 / self.u
    }
}

/// State `(v, r, beta)` of the inviscid reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InviscidState {
    pub v: f64,
    pub r: f64,
    pub beta: f64,
}

impl InviscidState {
    pub fn new(v: f64, r: f64, beta: f64) -> Self {
        Self { v, r, beta }
    }

    /// Nozzle data `v = epsilon, r = 1, beta = 0`.
    pub fn nozzle(params: &SpinParams) -> Self {
        Self::new(params.epsilon(), 1.0, 0.0)
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self::new(y[0], y[1], y[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.v, self.r, self.beta]
    }

    /// Converts to Euler-frame variables using `q = u - kappa / sqrt(u)`.
    pub fn to_viscous(self, params: &SpinParams) -> ViscousState {
        let u = self.v / params.epsilon();
        ViscousState::new(u, u - params.kappa() / u.sqrt(), self.r, self.beta)
    }
}

/// State of the Lagrangian system over flight time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LagrangianState {
    pub u: f64,
    pub q: f64,
    pub r: f64,
    pub beta: f64,
}

impl LagrangianState {
    pub fn new(u: f64, q: f64, r: f64, beta: f64) -> Self {
        Self { u, q, r, beta }
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self::new(y[0], y[1], y[2], y[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.u, self.q, self.r, self.beta]
    }
}

fn check_finite(values: &[f64]) -> Result<(), DomainError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DomainError::NonFinite)
    }
}

fn check_viscous(u: f64, q: f64, r: f64) -> Result<(), DomainError> {
    check_finite(&[u, q, r])?;
    if u <= U_MIN {
        return Err(DomainError::NonPositiveSpeed(u));
    }
    if q.abs() <= Q_MIN {
        return Err(DomainError::VanishingEnergy(q));
    }
    if r <= 0.0 {
        return Err(DomainError::NonPositiveRadius(r));
    }
    Ok(())
}

/// Arc-length derivative of the viscous state.
///
/// `params.delta()` must be positive; with `delta = 0` the speed equation
/// degenerates into the algebraic relation handled by [`rhs_inviscid`].
pub fn rhs_viscous(state: &ViscousState, params: &SpinParams) -> Result<ViscousState, DomainError> {
    let ViscousState { u, q, r, beta } = *state;
    check_viscous(u, q, r)?;
    check_finite(&[beta])?;
    let eps = params.epsilon();
    let eps2 = eps * eps;
    let kappa = params.kappa();
    let (sin_b, cos_b) = beta.sin_cos();

    let du = u * (u - kappa / u.sqrt() - q) / params.delta();
    let dq = r * cos_b / (eps2 * u);
    let dr = cos_b;
    let dbeta = (-2.0 / eps - (r * r / (eps2 * u) + q) * sin_b / r) / q;
    let out = ViscousState::new(du, dq, dr, dbeta);
    check_finite(&out.to_array())?;
    Ok(out)
}

/// Jacobian `d rhs_viscous / d (u, q, r, beta)`, row-major.
pub fn jacobian_viscous(
    state: &ViscousState,
    params: &SpinParams,
) -> Result<[[f64; 4]; 4], DomainError> {
    let ViscousState { u, q, r, beta } = *state;
    check_viscous(u, q, r)?;
    let eps = params.epsilon();
    let eps2 = eps * eps;
    let kappa = params.kappa();
    let delta = params.delta();
    let (sin_b, cos_b) = beta.sin_cos();
    let sqrt_u = u.sqrt();

    let mut jac = [[0.0; 4]; 4];
    jac[0][0] = (2.0 * u - 0.5 * kappa / sqrt_u - q) / delta;
    jac[0][1] = -u / delta;

    jac[1][0] = -r * cos_b / (eps2 * u * u);
    jac[1][2] = cos_b / (eps2 * u);
    jac[1][3] = -r * sin_b / (eps2 * u);

    jac[2][3] = -sin_b;

    // beta' = -2/(eps q) - r sin(beta)/(eps^2 u q) - sin(beta)/r
    let euq = eps2 * u * q;
    jac[3][0] = r * sin_b / (euq * u);
    jac[3][1] = 2.0 / (eps * q * q) + r * sin_b / (euq * q);
    jac[3][2] = -sin_b / euq + sin_b / (r * r);
    jac[3][3] = -r * cos_b / euq - cos_b / r;
    Ok(jac)
}

/// Boundary residual: three nozzle conditions followed by the free-end
/// stress balance `q(L) = u(L) - 2 kappa / sqrt(u(L))`.
pub fn bc_residual_viscous(
    left: &ViscousState,
    right: &ViscousState,
    params: &SpinParams,
) -> Result<[f64; 4], DomainError> {
    if !(right.u > 0.0) {
        return Err(DomainError::NonPositiveSpeed(right.u));
    }
    Ok([
        left.u - 1.0,
        left.r - 1.0,
        left.beta,
        right.q - right.u + 2.0 * params.kappa() / right.u.sqrt(),
    ])
}

/// Derivative of the free-end residual with respect to `(u, q, r, beta)` at `s = L`.
pub(crate) fn bc_right_gradient(right: &ViscousState, params: &SpinParams) -> [f64; 4] {
    [-1.0 - params.kappa() * right.u.powf(-1.5), 1.0, 0.0, 0.0]
}

/// Arc-length derivative of the inviscid reduced system.
pub fn rhs_inviscid(
    state: &InviscidState,
    params: &SpinParams,
) -> Result<InviscidState, DomainError> {
    let InviscidState { v, r, beta } = *state;
    check_finite(&[v, r, beta])?;
    if v <= 0.0 {
        return Err(DomainError::NonPositiveSpeed(v));
    }
    if r <= 0.0 {
        return Err(DomainError::NonPositiveRadius(r));
    }
    let lambda = params.lambda();
    let sqrt_v = v.sqrt();
    let denom = v - lambda / sqrt_v;
    if v * v * v <= lambda * lambda || denom <= 0.0 {
        return Err(DomainError::InviscidSingular(denom));
    }
    let (sin_b, cos_b) = beta.sin_cos();
    let dv = r * cos_b / (v + 0.5 * lambda / sqrt_v);
    let dr = cos_b;
    let dbeta = -2.0 / denom - (r * r / (v * denom) + 1.0) * sin_b / r;
    Ok(InviscidState::new(dv, dr, dbeta))
}

/// Flight-time derivative of the Lagrangian system.
///
/// For `delta = 0` the speed follows from differentiating the inviscid
/// relation `q = u - kappa / sqrt(u)`.
pub fn rhs_lagrangian(
    state: &LagrangianState,
    params: &SpinParams,
) -> Result<LagrangianState, DomainError> {
    let LagrangianState { u, q, r, beta } = *state;
    check_viscous(u, q, r)?;
    check_finite(&[beta])?;
    let eps = params.epsilon();
    let eps2 = eps * eps;
    let kappa = params.kappa();
    let (sin_b, cos_b) = beta.sin_cos();

    let du = if params.delta() > 0.0 {
        u * u * (u - kappa / u.sqrt() - q) / params.delta()
    } else {
        r * cos_b / (eps2 * (1.0 + 0.5 * kappa / u.powf(1.5)))
    };
    let dq = r * cos_b / eps2;
    let dr = u * cos_b;
    let dbeta = -2.0 * u / (eps * q) - (r * r / (eps2 * q) + u) * sin_b / r;
    let out = LagrangianState::new(du, dq, dr, dbeta);
    check_finite(&out.to_array())?;
    Ok(out)
}

/// Internal energy `q = u - delta u' / u - kappa / sqrt(u)`.
pub fn internal_energy(u: f64, u_prime: f64, params: &SpinParams) -> Result<f64, DomainError> {
    if !(u > 0.0) {
        return Err(DomainError::NonPositiveSpeed(u));
    }
    Ok(u - params.delta() * u_prime / u - params.kappa() / u.sqrt())
}
