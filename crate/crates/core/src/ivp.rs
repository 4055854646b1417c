//! Explicit Runge–Kutta integration with the Dormand–Prince 5(4) pair.
//!
//! Steps are controlled by a proportional-integral controller on the
//! embedded error estimate; every accepted step stores the coefficients of the
//! fourth-order continuous extension so the trajectory can be evaluated
//! anywhere inside the span.

use crate::error::{DomainError, IvpError};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for IvpConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 200_000,
            initial_step: None,
        }
    }
}

impl IvpConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), IvpError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(IvpError::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(IvpError::InvalidInput("max_steps must be at least 1".into()));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(IvpError::InvalidInput("initial step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Which member of the pair advances the solution in fixed-step mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMember {
    /// Fifth-order solution (the one used by adaptive runs).
    Advancing,
    /// Embedded fourth-order solution.
    Embedded,
}

/// The right-hand side raised a domain error that no step reduction could avoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainStop {
    pub at: f64,
    pub error: DomainError,
}

/// Accepted steps plus continuous-extension coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    // Five coefficient vectors per step.
    dense: Vec<f64>,
    domain_stop: Option<DomainStop>,
    rhs_evaluations: usize,
}

impl Trajectory {
    fn new(dim: usize, t0: f64, y0: &[f64]) -> Self {
        Self {
            dim,
            times: vec![t0],
            states: y0.to_vec(),
            dense: Vec::new(),
            domain_stop: None,
            rhs_evaluations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, index: usize) -> &[f64] {
        &self.states[index * self.dim..(index + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times
            .iter()
            .copied()
            .zip(self.states.chunks_exact(self.dim))
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Set when integration stopped early because the right-hand side left its domain.
    pub fn domain_stop(&self) -> Option<&DomainStop> {
        self.domain_stop.as_ref()
    }

    pub fn rhs_evaluations(&self) -> usize {
        self.rhs_evaluations
    }

    /// Dense-output evaluation at `t`.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>, IvpError> {
        let mut out = vec![0.0; self.dim];
        self.evaluate_into(t, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) -> Result<(), IvpError> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(IvpError::OutOfSpan(t));
        }
        let n = self.dim;
        // index of the first node strictly greater than t
        let upper = self.times.partition_point(|&x| x <= t);
        if upper > 0 && self.times[upper - 1] == t {
            out.copy_from_slice(self.state(upper - 1));
            return Ok(());
        }
        let step = upper - 1;
        let (t0, t1) = (self.times[step], self.times[step + 1]);
        let theta = (t - t0) / (t1 - t0);
        let theta1 = 1.0 - theta;
        let c = &self.dense[step * 5 * n..(step + 1) * 5 * n];
        for i in 0..n {
            out[i] = c[i]
                + theta
                    * (c[n + i]
                        + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
        Ok(())
    }

    fn push(&mut self, t: f64, y: &[f64], coeffs: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.dense.extend_from_slice(coeffs);
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
    err: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y5: vec![0.0; n],
            err: vec![0.0; n],
        }
    }
}

/// One Dormand–Prince step. `st.k[0]` must hold `f(t, y)`. On return `y5`
/// holds the fifth-order solution, `k[6]` its slope and `err` the difference
/// between the two members.
fn dp_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64, st: &mut Stages) -> Result<(), DomainError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), DomainError>,
{
    let n = y.len();
    macro_rules! stage {
        ($idx:expr, $c:expr, [$($j:expr => $a:expr),*]) => {{
            for i in 0..n {
                st.tmp[i] = y[i] + h * (0.0 $(+ $a * st.k[$j][i])*);
            }
            let (before, after) = st.k.split_at_mut($idx);
            let _ = before;
            rhs(t + $c * h, &st.tmp, &mut after[0])?;
            if after[0].iter().any(|v| !v.is_finite()) {
                return Err(DomainError::NonFinite);
            }
        }};
    }
    stage!(1, C2, [0 => A21]);
    stage!(2, C3, [0 => A31, 1 => A32]);
    stage!(3, C4, [0 => A41, 1 => A42, 2 => A43]);
    stage!(4, C5, [0 => A51, 1 => A52, 2 => A53, 3 => A54]);
    stage!(5, 1.0, [0 => A61, 1 => A62, 2 => A63, 3 => A64, 4 => A65]);
    for i in 0..n {
        st.y5[i] = y[i]
            + h * (B1 * st.k[0][i]
                + B3 * st.k[2][i]
                + B4 * st.k[3][i]
                + B5 * st.k[4][i]
                + B6 * st.k[5][i]);
    }
    let (_, last) = st.k.split_at_mut(6);
    rhs(t + h, &st.y5, &mut last[0])?;
    if last[0].iter().any(|v| !v.is_finite()) {
        return Err(DomainError::NonFinite);
    }
    for i in 0..n {
        st.err[i] = h
            * (E1 * st.k[0][i]
                + E3 * st.k[2][i]
                + E4 * st.k[3][i]
                + E5 * st.k[4][i]
                + E6 * st.k[5][i]
                + E7 * st.k[6][i]);
    }
    Ok(())
}

fn dense_coefficients(y0: &[f64], y1: &[f64], h: f64, st: &Stages, quartic: bool) -> Vec<f64> {
    let n = y0.len();
    let mut c = vec![0.0; 5 * n];
    for i in 0..n {
        let dy = y1[i] - y0[i];
        let bspl = h * st.k[0][i] - dy;
        c[i] = y0[i];
        c[n + i] = dy;
        c[2 * n + i] = bspl;
        c[3 * n + i] = dy - h * st.k[6][i] - bspl;
        if quartic {
            c[4 * n + i] = h
                * (D1 * st.k[0][i]
                    + D3 * st.k[2][i]
                    + D4 * st.k[3][i]
                    + D5 * st.k[4][i]
                    + D6 * st.k[5][i]
                    + D7 * st.k[6][i]);
        }
    }
    c
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IvpConfig) -> f64 {
    err.iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| e.abs() / (cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IvpConfig,
) -> Result<f64, DomainError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), DomainError>,
{
    let n = y0.len();
    let scale: Vec<f64> = y0
        .iter()
        .map(|y| cfg.abs_tol + cfg.rel_tol * y.abs())
        .collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Adaptive integration of `y' = rhs(t, y)` over `span = (a, b)` with `a < b`.
///
/// If the right-hand side raises a [`DomainError`] that persists after
/// repeated step reductions the returned trajectory ends early and carries a
/// [`DomainStop`].
pub fn integrate<F>(
    mut rhs: F,
    initial: &[f64],
    span: (f64, f64),
    cfg: &IvpConfig,
) -> Result<Trajectory, IvpError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), DomainError>,
{
    cfg.validate()?;
    let (a, b) = span;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(IvpError::InvalidInput(format!("invalid span ({a}, {b})")));
    }
    let n = initial.len();
    let mut traj = Trajectory::new(n, a, initial);
    let mut st = Stages::new(n);
    rhs(a, initial, &mut st.k[0])?;
    if st.k[0].iter().any(|v| !v.is_finite()) {
        return Err(IvpError::Domain(DomainError::NonFinite));
    }
    traj.rhs_evaluations += 1;

    let mut h = match cfg.initial_step {
        Some(h) => h.min(b - a),
        None => initial_step(&mut rhs, a, initial, &st.k[0], b - a, cfg)?,
    };
    traj.rhs_evaluations += 1;
    let mut t = a;
    let mut y = initial.to_vec();
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = 0usize;
    let mut domain_failures = 0usize;

    while t < b {
        if steps >= cfg.max_steps {
            return Err(IvpError::StepBudgetExceeded(cfg.max_steps));
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(b - a);
        if h < h_min {
            if domain_failures > 0 {
                break;
            }
            return Err(IvpError::StepUnderflow { t, h });
        }
        let last = t + h >= b || b - (t + h) < h_min;
        if last {
            h = b - t;
        }
        steps += 1;
        match dp_step(&mut rhs, t, &y, h, &mut st) {
            Err(e) => {
                traj.rhs_evaluations += 6;
                domain_failures += 1;
                traj.domain_stop = Some(DomainStop { at: t, error: e });
                h *= 0.25;
                rejected_last = true;
                continue;
            }
            Ok(()) => traj.rhs_evaluations += 6,
        }
        let err = error_norm(&st.err, &y, &st.y5, cfg);
        let fac11 = err.powf(ALPHA);
        if err <= 1.0 {
            domain_failures = 0;
            traj.domain_stop = None;
            let mut fac = fac11 / err_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
            let mut h_new = h / fac;
            err_old = err.max(1e-4);
            if rejected_last {
                h_new = h_new.min(h);
            }
            rejected_last = false;
            let coeffs = dense_coefficients(&y, &st.y5, h, &st, true);
            t = if last { b } else { t + h };
            y.copy_from_slice(&st.y5);
            traj.push(t, &y, &coeffs);
            let (first, rest) = st.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
            rejected_last = true;
        }
    }
    if t < b && traj.domain_stop.is_none() {
        return Err(IvpError::StepUnderflow { t, h });
    }
    if t >= b {
        traj.domain_stop = None;
    }
    Ok(traj)
}

/// Fixed-step integration with `steps` equal steps. Used to verify the order
/// of each member of the pair.
pub fn integrate_fixed<F>(
    mut rhs: F,
    initial: &[f64],
    span: (f64, f64),
    steps: usize,
    member: StepMember,
) -> Result<Trajectory, IvpError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), DomainError>,
{
    let (a, b) = span;
    if !(a < b) || steps == 0 {
        return Err(IvpError::InvalidInput("need a < b and steps >= 1".into()));
    }
    let n = initial.len();
    let h = (b - a) / steps as f64;
    let mut traj = Trajectory::new(n, a, initial);
    let mut st = Stages::new(n);
    let mut y = initial.to_vec();
    rhs(a, &y, &mut st.k[0])?;
    for i in 0..steps {
        let t = a + i as f64 * h;
        let t_next = if i + 1 == steps { b } else { a + (i + 1) as f64 * h };
        dp_step(&mut rhs, t, &y, h, &mut st)?;
        let y_next: Vec<f64> = match member {
            StepMember::Advancing => st.y5.clone(),
            StepMember::Embedded => {
                let y4: Vec<f64> = st.y5.iter().zip(&st.err).map(|(a, e)| a - e).collect();
                rhs(t_next, &y4, &mut st.k[6])?;
                y4
            }
        };
        let coeffs = dense_coefficients(&y, &y_next, h, &st, member == StepMember::Advancing);
        traj.push(t_next, &y_next, &coeffs);
        y = y_next;
        let (first, rest) = st.k.split_at_mut(1);
        first[0].copy_from_slice(&rest[5]);
    }
    traj.rhs_evaluations = steps * 6 + 1;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn exp_rhs(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), DomainError> {
        dy[0] = y[0];
        Ok(())
    }

    fn tight() -> IvpConfig {
        IvpConfig::with_tolerances(1e-8, 1e-12)
    }

    #[test]
    fn exponential_growth() {
        let traj = integrate(exp_rhs, &[1.0], (0.0, 1.0), &tight()).unwrap();
        assert!((traj.last_state()[0] - E).abs() < 1e-7);
        assert_eq!(traj.end(), 1.0);
        assert!(traj.domain_stop().is_none());
    }

    #[test]
    fn riccati_decay() {
        let traj = integrate(
            |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = -y[0] * y[0];
                Ok(())
            },
            &[1.0],
            (0.0, 2.0),
            &tight(),
        )
        .unwrap();
        assert!((traj.last_state()[0] - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn dense_output_interior_and_nodes() {
        let traj = integrate(exp_rhs, &[1.0], (0.0, 1.0), &tight()).unwrap();
        assert!((traj.evaluate(0.5).unwrap()[0] - 0.5f64.exp()).abs() < 1e-7);
        for (t, y) in traj.nodes() {
            assert_eq!(traj.evaluate(t).unwrap(), y.to_vec());
        }
        assert!(matches!(traj.evaluate(1.5), Err(IvpError::OutOfSpan(_))));
        assert!(matches!(traj.evaluate(-0.1), Err(IvpError::OutOfSpan(_))));
    }

    #[test]
    fn dense_output_continuous_at_nodes() {
        let traj = integrate(
            |t, y: &[f64], dy: &mut [f64]| {
                dy[0] = t.cos() * y[0];
                dy[1] = -y[1];
                Ok(())
            },
            &[1.0, 2.0],
            (0.0, 5.0),
            &IvpConfig::with_tolerances(1e-6, 1e-9),
        )
        .unwrap();
        for &t in &traj.times()[1..traj.len() - 1] {
            let l = traj.evaluate(t * (1.0 - 1e-13)).unwrap();
            let r = traj.evaluate(t * (1.0 + 1e-13)).unwrap();
            for (a, b) in l.iter().zip(&r) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn domain_error_truncates_trajectory() {
        // y' = -1 from y = 1; the domain ends at y = 0.25.
        let traj = integrate(
            |_t, y: &[f64], dy: &mut [f64]| {
                if y[0] <= 0.25 {
                    return Err(DomainError::NonPositiveSpeed(y[0]));
                }
                dy[0] = -1.0;
                Ok(())
            },
            &[1.0],
            (0.0, 2.0),
            &tight(),
        )
        .unwrap();
        let stop = traj.domain_stop().expect("domain stop");
        assert!(stop.at < 0.75 + 1e-6 && stop.at > 0.7);
        assert!(traj.end() < 2.0);
    }

    #[test]
    fn step_budget() {
        let cfg = IvpConfig {
            max_steps: 3,
            ..tight()
        };
        let res = integrate(exp_rhs, &[1.0], (0.0, 100.0), &cfg);
        assert!(matches!(res, Err(IvpError::StepBudgetExceeded(3))));
    }

    #[test]
    fn step_underflow_at_blowup() {
        // y' = y^2 blows up at t = 1.
        let res = integrate(
            |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &[1.0],
            (0.0, 2.0),
            &IvpConfig::default(),
        );
        assert!(matches!(
            res,
            Err(IvpError::StepUnderflow { .. }) | Err(IvpError::StepBudgetExceeded(_))
        ));
    }

    #[test]
    fn invalid_inputs() {
        assert!(integrate(exp_rhs, &[1.0], (1.0, 0.0), &tight()).is_err());
        let cfg = IvpConfig {
            rel_tol: 0.0,
            ..tight()
        };
        assert!(integrate(exp_rhs, &[1.0], (0.0, 1.0), &cfg).is_err());
    }

    fn fixed_error(steps: usize, member: StepMember) -> f64 {
        let traj = integrate_fixed(
            |t, y: &[f64], dy: &mut [f64]| {
                dy[0] = t.cos() * y[0];
                Ok(())
            },
            &[1.0],
            (0.0, 2.0),
            steps,
            member,
        )
        .unwrap();
        (traj.last_state()[0] - 2f64.sin().exp()).abs()
    }

    #[test]
    fn fixed_step_orders() {
        for (member, order) in [(StepMember::Advancing, 5.0), (StepMember::Embedded, 4.0)] {
            let e1 = fixed_error(40, member);
            let e2 = fixed_error(80, member);
            let e3 = fixed_error(160, member);
            for ratio in [e1 / e2, e2 / e3] {
                assert!(
                    ratio >= 2f64.powf(order) * 0.8,
                    "{member:?}: ratio {ratio} below expected for order {order}"
                );
            }
        }
    }
}
