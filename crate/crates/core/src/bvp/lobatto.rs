//! Four-stage Lobatto IIIA collocation weights.
//!
//! On an interval of width `h` starting at `x`, the collocation polynomial is
//! `p(x + theta h) = y + h * sum_k B_k(theta) F_k` where `F_k` are the slopes
//! at the four Lobatto abscissae and `B_k` integrates the Lagrange basis
//! polynomial `l_k`. The Runge–Kutta matrix is `a[j][k] = B_k(c_j)`.

use std::sync::OnceLock;

pub const STAGES: usize = 4;

#[derive(Debug)]
pub struct Lobatto {
    pub c: [f64; STAGES],
    pub a: [[f64; STAGES]; STAGES],
    /// Monomial coefficients of the Lagrange basis `l_k`, degree 3.
    basis: [[f64; 4]; STAGES],
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl Lobatto {
    fn build() -> Self {
        let s5 = 5f64.sqrt();
        let c = [0.0, (5.0 - s5) / 10.0, (5.0 + s5) / 10.0, 1.0];
        let mut basis = [[0.0; 4]; STAGES];
        for k in 0..STAGES {
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for m in (0..STAGES).filter(|&m| m != k) {
                // multiply by (x - c_m)
                let mut next = vec![0.0; poly.len() + 1];
                for (p, coef) in poly.iter().enumerate() {
                    next[p + 1] += coef;
                    next[p] -= coef * c[m];
                }
                poly = next;
                denom *= c[k] - c[m];
            }
            for p in 0..4 {
                basis[k][p] = poly[p] / denom;
            }
        }
        let mut lob = Self {
            c,
            a: [[0.0; STAGES]; STAGES],
            basis,
        };
        for j in 0..STAGES {
            lob.a[j] = lob.integral_weights(c[j]);
        }
        // The last row are the quadrature weights 1/12, 5/12, 5/12, 1/12.
        lob.a[STAGES - 1] = [1.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0, 1.0 / 12.0];
        lob.a[0] = [0.0; STAGES];
        lob
    }

    pub fn get() -> &'static Lobatto {
        static TABLE: OnceLock<Lobatto> = OnceLock::new();
        TABLE.get_or_init(Lobatto::build)
    }

    /// `B_k(theta)`.
    pub fn integral_weights(&self, theta: f64) -> [f64; STAGES] {
        std::array::from_fn(|k| {
            let b = &self.basis[k];
            let integrated = [0.0, b[0], b[1] / 2.0, b[2] / 3.0, b[3] / 4.0];
            poly_eval(&integrated, theta)
        })
    }

    /// `l_k(theta)`.
    pub fn slope_weights(&self, theta: f64) -> [f64; STAGES] {
        std::array::from_fn(|k| poly_eval(&self.basis[k], theta))
    }

    /// `l_k'(theta)`.
    pub fn curvature_weights(&self, theta: f64) -> [f64; STAGES] {
        std::array::from_fn(|k| {
            let b = &self.basis[k];
            poly_eval(&[b[1], 2.0 * b[2], 3.0 * b[3]], theta)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_matches_closed_form() {
        let l = Lobatto::get();
        let s5 = 5f64.sqrt();
        let row2 = [
            (11.0 + s5) / 120.0,
            (25.0 - s5) / 120.0,
            (25.0 - 13.0 * s5) / 120.0,
            (-1.0 + s5) / 120.0,
        ];
        let row3 = [
            (11.0 - s5) / 120.0,
            (25.0 + 13.0 * s5) / 120.0,
            (25.0 + s5) / 120.0,
            (-1.0 - s5) / 120.0,
        ];
        for k in 0..4 {
            assert!((l.a[1][k] - row2[k]).abs() < 1e-15);
            assert!((l.a[2][k] - row3[k]).abs() < 1e-15);
        }
        let full = l.integral_weights(1.0);
        for k in 0..4 {
            assert!((full[k] - l.a[3][k]).abs() < 1e-14);
        }
    }

    #[test]
    fn row_sums_equal_abscissae() {
        let l = Lobatto::get();
        for j in 0..4 {
            let sum: f64 = l.a[j].iter().sum();
            assert!((sum - l.c[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn basis_is_cardinal() {
        let l = Lobatto::get();
        for j in 0..4 {
            let w = l.slope_weights(l.c[j]);
            for k in 0..4 {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((w[k] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_is_exact_for_degree_five() {
        // integral of x^5 over [0, 1]
        let l = Lobatto::get();
        let q: f64 = (0..4).map(|k| l.a[3][k] * l.c[k].powi(5)).sum();
        assert!((q - 1.0 / 6.0).abs() < 1e-15);
    }
}
