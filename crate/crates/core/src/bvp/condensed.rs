//! Newton systems of the collocation equations with the interior stages
//! eliminated interval by interval.
//!
//! The two interior stage values of an interval are coupled only to the two
//! end nodes of that interval, so they can be solved for locally. What
//! remains is a block bidiagonal system in the mesh-node values, bordered by
//! the boundary rows, which is banded with half-bandwidths of about `n`.

use super::lobatto::Lobatto;
use super::mesh::{offset, Mesh};
use crate::banded::{BandLu, BandMatrix, SingularMatrix};

/// In-place LU with partial pivoting of a row-major `m x m` matrix.
fn dense_lu(a: &mut [f64], m: usize, piv: &mut [usize]) -> bool {
    for c in 0..m {
        let p = (c..m)
            .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
            .unwrap_or(c);
        if a[p * m + c] == 0.0 || !a[p * m + c].is_finite() {
            return false;
        }
        piv[c] = p;
        if p != c {
            for j in 0..m {
                a.swap(c * m + j, p * m + j);
            }
        }
        let (top, rest) = a.split_at_mut((c + 1) * m);
        let pivot_row = &top[c * m..];
        let inv = 1.0 / pivot_row[c];
        for row in rest.chunks_exact_mut(m) {
            let l = row[c] * inv;
            row[c] = l;
            if l != 0.0 {
                for (x, u) in row[c + 1..].iter_mut().zip(&pivot_row[c + 1..]) {
                    *x -= l * u;
                }
            }
        }
    }
    true
}

/// Solves `A x = b` in place.
fn dense_solve_vec(lu: &[f64], m: usize, piv: &[usize], b: &mut [f64]) {
    for (c, &p) in piv.iter().enumerate() {
        b.swap(c, p);
    }
    for r in 1..m {
        let dot: f64 = lu[r * m..r * m + r].iter().zip(&b[..r]).map(|(l, x)| l * x).sum();
        b[r] -= dot;
    }
    for r in (0..m).rev() {
        let dot: f64 = lu[r * m + r + 1..(r + 1) * m].iter().zip(&b[r + 1..]).map(|(u, x)| u * x).sum();
        b[r] = (b[r] - dot) / lu[r * m + r];
    }
}

/// Solves `A X = B` in place for a row-major `m x q` right-hand side.
fn dense_solve(lu: &[f64], m: usize, piv: &[usize], b: &mut [f64], q: usize) {
    for (c, &p) in piv.iter().enumerate() {
        if p != c {
            for j in 0..q {
                b.swap(c * q + j, p * q + j);
            }
        }
    }
    for r in 1..m {
        let (done, rest) = b.split_at_mut(r * q);
        let target = &mut rest[..q];
        for (j, &l) in lu[r * m..r * m + r].iter().enumerate() {
            if l != 0.0 {
                for (t, s) in target.iter_mut().zip(&done[j * q..(j + 1) * q]) {
                    *t -= l * s;
                }
            }
        }
    }
    for r in (0..m).rev() {
        let (head, tail) = b.split_at_mut((r + 1) * q);
        let target = &mut head[r * q..];
        for (j, &u) in lu[r * m + r + 1..(r + 1) * m].iter().enumerate() {
            if u != 0.0 {
                let s = &tail[j * q..(j + 1) * q];
                for (t, v) in target.iter_mut().zip(s) {
                    *t -= u * v;
                }
            }
        }
        let inv = 1.0 / lu[r * m + r];
        target.iter_mut().for_each(|t| *t *= inv);
    }
}

/// Storage of a factorization, reused when the Newton matrix is rebuilt.
#[derive(Default)]
pub(super) struct Buffers {
    interior: Vec<f64>,
    pivots: Vec<usize>,
    coupling: Vec<f64>,
    gain: Vec<f64>,
    band: Option<BandMatrix>,
}

pub(super) struct CondensedLu {
    n: usize,
    k: usize,
    intervals: usize,
    /// Factored `2n x 2n` interior blocks, one after another.
    interior: Vec<f64>,
    pivots: Vec<usize>,
    /// Coupling of the last stage equation to the interior stages, `n x 2n` each.
    coupling: Vec<f64>,
    /// Interior response to the left and right node values, `2n x 2n` each.
    gain: Vec<f64>,
    nodal: BandLu,
}

impl CondensedLu {
    /// `point_jacobians` holds the row-major `n x n` Jacobian of the right-hand
    /// side at every collocation point; `d_left` and `d_right` are the
    /// boundary residual derivatives. The storage of an earlier factorization
    /// is reused through `buffers`.
    pub(super) fn build(
        mesh: &Mesh,
        n: usize,
        k: usize,
        point_jacobians: &[f64],
        d_left: &[f64],
        d_right: &[f64],
        buffers: Buffers,
    ) -> Result<Self, SingularMatrix> {
        let lob = Lobatto::get();
        let intervals = mesh.intervals();
        let nn = n * n;
        let m2 = 2 * n;
        let sq = m2 * m2;
        let nodes = n * (intervals + 1);
        let (kl, ku) = (k + n - 1, 2 * n - 1 - k);
        let mut nodal = match buffers.band {
            Some(mut b) if (b.dim(), b.lower_bandwidth(), b.upper_bandwidth()) == (nodes, kl, ku) => {
                b.fill_zero();
                b
            }
            _ => BandMatrix::zeros(nodes, kl, ku),
        };
        for r in 0..k {
            for c in 0..n {
                nodal.set(r, c, d_left[r * n + c]);
            }
        }
        let right_row = k + n * intervals;
        for r in k..n {
            for c in 0..n {
                nodal.set(right_row + r - k, n * intervals + c, d_right[r * n + c]);
            }
        }

        // Every entry of these blocks is overwritten below.
        let sized = |mut v: Vec<f64>, len: usize| {
            v.resize(len, 0.0);
            v
        };
        let mut interior = sized(buffers.interior, intervals * sq);
        let mut pivots = buffers.pivots;
        pivots.resize(intervals * m2, 0);
        let mut coupling = sized(buffers.coupling, intervals * n * m2);
        let mut gain = sized(buffers.gain, intervals * sq);
        let mut ends = vec![0.0; n * m2];
        for i in 0..intervals {
            let inv_h = 1.0 / mesh.width(i);
            let jac = |m: usize| &point_jacobians[(3 * i + m) * nn..(3 * i + m + 1) * nn];
            let kb = &mut interior[i * sq..(i + 1) * sq];
            let gb = &mut gain[i * sq..(i + 1) * sq];
            let fb = &mut coupling[i * n * m2..(i + 1) * n * m2];
            // Stage equation j at point m contributes -a[j][m] J_m, plus the
            // difference quotient on the diagonal. Rows of the last stage
            // equation go to the coupling block and to `ends`.
            for j in 1..=3 {
                for m in 0..4 {
                    let (dest, stride, row0): (&mut [f64], usize, usize) = match (j, m) {
                        (3, 1 | 2) => (&mut *fb, m2, 0),
                        (3, _) => (&mut ends[..], m2, 0),
                        (_, 1 | 2) => (&mut *kb, m2, (j - 1) * n),
                        _ => (&mut *gb, m2, (j - 1) * n),
                    };
                    let col0 = if m == 1 || m == 2 { (m - 1) * n } else { (m / 3) * n };
                    let a = lob.a[j][m];
                    let diag = if m == j {
                        inv_h
                    } else if m == 0 {
                        -inv_h
                    } else {
                        0.0
                    };
                    for (r, jrow) in jac(m).chunks_exact(n).enumerate() {
                        let out = &mut dest[(row0 + r) * stride + col0..(row0 + r) * stride + col0 + n];
                        for (o, v) in out.iter_mut().zip(jrow) {
                            *o = -a * v;
                        }
                        out[r] += diag;
                    }
                }
            }
            if !dense_lu(kb, m2, &mut pivots[i * m2..(i + 1) * m2]) {
                return Err(SingularMatrix(offset(n, i, 1)));
            }
            dense_solve(kb, m2, &pivots[i * m2..(i + 1) * m2], gb, m2);
            // ends -= F G, the Schur complement on the two end nodes.
            for (erow, frow) in ends.chunks_exact_mut(m2).zip(fb.chunks_exact(m2)) {
                for (&f, grow) in frow.iter().zip(gb.chunks_exact(m2)) {
                    for (e, g) in erow.iter_mut().zip(grow) {
                        *e -= f * g;
                    }
                }
            }
            for (r, erow) in ends.chunks_exact(m2).enumerate() {
                for (c, &v) in erow.iter().enumerate() {
                    nodal.set(k + n * i + r, n * i + c, v);
                }
            }
        }
        Ok(Self {
            n,
            k,
            intervals,
            interior,
            pivots,
            coupling,
            gain,
            nodal: nodal.factorize()?,
        })
    }

    pub(super) fn into_buffers(self) -> Buffers {
        Buffers {
            interior: self.interior,
            pivots: self.pivots,
            coupling: self.coupling,
            gain: self.gain,
            band: Some(self.nodal.into_matrix()),
        }
    }

    /// Newton correction `out = -J^{-1} res` in the layout of the unknowns.
    pub(super) fn correction(&self, res: &[f64], out: &mut [f64]) {
        let (n, k, intervals) = (self.n, self.k, self.intervals);
        let m2 = 2 * n;
        let sq = m2 * m2;
        let mut g = vec![0.0; n * (intervals + 1)];
        let mut stages = vec![0.0; m2 * intervals];
        g[..k].iter_mut().zip(res).for_each(|(gi, r)| *gi = -r);
        for i in 0..intervals {
            let row = k + 3 * n * i;
            let w = &mut stages[m2 * i..m2 * (i + 1)];
            w.iter_mut().zip(&res[row..row + m2]).for_each(|(wq, r)| *wq = -r);
            dense_solve_vec(
                &self.interior[i * sq..(i + 1) * sq],
                m2,
                &self.pivots[i * m2..(i + 1) * m2],
                w,
            );
            let f = &self.coupling[i * n * m2..(i + 1) * n * m2];
            for r in 0..n {
                let fw: f64 = f[r * m2..(r + 1) * m2].iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                g[k + n * i + r] = -res[row + m2 + r] - fw;
            }
        }
        let tail = res.len() - (n - k);
        for r in 0..n - k {
            g[k + n * intervals + r] = -res[tail + r];
        }
        self.nodal.solve_in_place(&mut g);

        for i in 0..intervals {
            let ends = &g[n * i..n * (i + 2)];
            let gb = &self.gain[i * sq..(i + 1) * sq];
            let o = offset(n, i, 0);
            out[o..o + n].copy_from_slice(&ends[..n]);
            for q in 0..m2 {
                let shift: f64 = gb[q * m2..(q + 1) * m2].iter().zip(ends).map(|(a, b)| a * b).sum();
                out[o + n + q] = stages[m2 * i + q] - shift;
            }
        }
        let o = offset(n, intervals, 0);
        out[o..o + n].copy_from_slice(&g[n * intervals..]);
    }
}
