use serde::{Deserialize, Serialize};

use super::lobatto::{Lobatto, STAGES};
use crate::error::Error;

pub const MIN_INTERVALS: usize = 4;

/// Strictly increasing breakpoints with at least [`MIN_INTERVALS`] intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    breakpoints: Vec<f64>,
}

impl Mesh {
    pub fn uniform(a: f64, b: f64, intervals: usize) -> Result<Self, Error> {
        if intervals < MIN_INTERVALS {
            return Err(Error::Mesh(format!(
                "need at least {MIN_INTERVALS} intervals, got {intervals}"
            )));
        }
        let h = (b - a) / intervals as f64;
        let mut breakpoints: Vec<f64> = (0..=intervals).map(|i| a + i as f64 * h).collect();
        breakpoints[intervals] = b;
        Self::from_breakpoints(breakpoints)
    }

    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self, Error> {
        if breakpoints.len() < MIN_INTERVALS + 1 {
            return Err(Error::Mesh(format!(
                "need at least {} breakpoints",
                MIN_INTERVALS + 1
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::Mesh("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Mesh("breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    /// The four Lobatto points of interval `i`.
    pub fn stage_points(&self, i: usize) -> [f64; STAGES] {
        let lob = Lobatto::get();
        let x = self.breakpoints[i];
        let h = self.width(i);
        let mut pts = lob.c.map(|c| x + c * h);
        pts[STAGES - 1] = self.breakpoints[i + 1];
        pts
    }

    /// Every collocation point in storage order (node, stage, stage, node, ...).
    pub fn collocation_points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.intervals() + 1);
        for i in 0..self.intervals() {
            let p = self.stage_points(i);
            out.extend_from_slice(&p[..3]);
        }
        out.push(self.end());
        out
    }

    /// Interval index and local coordinate in `[0, 1]` of `s`, clamped to the mesh.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.intervals();
        let idx = self
            .breakpoints
            .partition_point(|&x| x <= s)
            .saturating_sub(1)
            .min(n - 1);
        let theta = ((s - self.breakpoints[idx]) / self.width(idx)).clamp(0.0, 1.0);
        (idx, theta)
    }

    /// Splits interval `i` into `parts` equal pieces for every `(i, parts)`.
    pub fn refined(&self, parts: &[usize]) -> Self {
        let mut bp = Vec::with_capacity(self.breakpoints.len() * 2);
        for i in 0..self.intervals() {
            let x = self.breakpoints[i];
            let h = self.width(i);
            let k = parts[i].max(1);
            for p in 0..k {
                bp.push(x + h * p as f64 / k as f64);
            }
        }
        bp.push(self.end());
        Self { breakpoints: bp }
    }
}

/// Offset of collocation point `j` (0..=3) of interval `i` in the flat storage.
#[inline]
pub(crate) fn offset(dim: usize, i: usize, j: usize) -> usize {
    dim * (3 * i + j)
}

/// A C¹ piecewise quartic on a [`Mesh`], determined per interval by the
/// left node value and the slopes at the four Lobatto points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSolution {
    mesh: Mesh,
    dim: usize,
    values: Vec<f64>,
    slopes: Vec<f64>,
    error_estimate: Vec<f64>,
    newton_iterations: usize,
    converged: bool,
}

impl MeshSolution {
    pub(crate) fn from_parts(
        mesh: Mesh,
        dim: usize,
        values: Vec<f64>,
        slopes: Vec<f64>,
        error_estimate: Vec<f64>,
        newton_iterations: usize,
        converged: bool,
    ) -> Self {
        debug_assert_eq!(values.len(), dim * (3 * mesh.intervals() + 1));
        debug_assert_eq!(slopes.len(), values.len());
        Self {
            mesh,
            dim,
            values,
            slopes,
            error_estimate,
            newton_iterations,
            converged,
        }
    }

    /// Builds an unconverged solution by sampling value and slope of a known
    /// function at every collocation point.
    pub fn from_fn<F>(mesh: Mesh, dim: usize, mut f: F) -> Result<Self, Error>
    where
        F: FnMut(f64) -> Result<(Vec<f64>, Vec<f64>), Error>,
    {
        let points = mesh.collocation_points();
        let mut values = Vec::with_capacity(points.len() * dim);
        let mut slopes = Vec::with_capacity(points.len() * dim);
        for s in points {
            let (y, dy) = f(s)?;
            if y.len() != dim || dy.len() != dim {
                return Err(Error::Mesh("sample has wrong dimension".into()));
            }
            values.extend(y);
            slopes.extend(dy);
        }
        let n = mesh.intervals();
        Ok(Self::from_parts(
            mesh,
            dim,
            values,
            slopes,
            vec![f64::INFINITY; n],
            0,
            false,
        ))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Per-interval scaled residual estimate.
    pub fn error_estimate(&self) -> &[f64] {
        &self.error_estimate
    }

    pub fn max_error_estimate(&self) -> f64 {
        self.error_estimate.iter().copied().fold(0.0, f64::max)
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Value at collocation point `j` of interval `i`.
    pub fn stage_value(&self, i: usize, j: usize) -> &[f64] {
        let o = offset(self.dim, i, j);
        &self.values[o..o + self.dim]
    }

    pub fn stage_slope(&self, i: usize, j: usize) -> &[f64] {
        let o = offset(self.dim, i, j);
        &self.slopes[o..o + self.dim]
    }

    pub fn left(&self) -> &[f64] {
        self.stage_value(0, 0)
    }

    pub fn right(&self) -> &[f64] {
        let o = offset(self.dim, self.mesh.intervals(), 0);
        &self.values[o..o + self.dim]
    }

    fn combine(&self, i: usize, weights: [f64; STAGES], scale: f64, base: bool) -> Vec<f64> {
        let mut out = if base {
            self.stage_value(i, 0).to_vec()
        } else {
            vec![0.0; self.dim]
        };
        for (k, w) in weights.iter().enumerate() {
            let f = self.stage_slope(i, k);
            for (o, fk) in out.iter_mut().zip(f) {
                *o += scale * w * fk;
            }
        }
        out
    }

    /// Value of the collocation polynomial at `s` (clamped to the mesh span).
    pub fn evaluate(&self, s: f64) -> Vec<f64> {
        let (i, theta) = self.mesh.locate(s);
        let h = self.mesh.width(i);
        self.combine(i, Lobatto::get().integral_weights(theta), h, true)
    }

    pub fn derivative(&self, s: f64) -> Vec<f64> {
        let (i, theta) = self.mesh.locate(s);
        self.combine(i, Lobatto::get().slope_weights(theta), 1.0, false)
    }

    pub fn second_derivative(&self, s: f64) -> Vec<f64> {
        let (i, theta) = self.mesh.locate(s);
        let h = self.mesh.width(i);
        self.combine(i, Lobatto::get().curvature_weights(theta), 1.0 / h, false)
    }

    /// Resamples onto another mesh spanning the same interval.
    pub fn resample(&self, mesh: Mesh) -> Self {
        let points = mesh.collocation_points();
        let mut values = Vec::with_capacity(points.len() * self.dim);
        let mut slopes = Vec::with_capacity(points.len() * self.dim);
        for s in points {
            values.extend(self.evaluate(s));
            slopes.extend(self.derivative(s));
        }
        let n = mesh.intervals();
        Self::from_parts(
            mesh,
            self.dim,
            values,
            slopes,
            vec![f64::INFINITY; n],
            0,
            false,
        )
    }
}
