//! Banded LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK general-band convention: a square matrix with
//! `kl` sub- and `ku` super-diagonals lives in `2 kl + ku + 1` rows, the
//! extra `kl` rows holding fill-in produced by row interchanges.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("matrix is singular: zero pivot in column {0}")]
pub struct SingularMatrix(pub usize);

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ld,
            data: vec![0.0; ld * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ld
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            0.0
        }
    }

    /// Sets an entry inside the band. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.index(i, j);
        self.data[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.index(i, j);
        self.data[k] += value;
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        y
    }

    /// Factorizes in place, consuming the matrix.
    pub fn factorize(mut self) -> Result<BandLu, SingularMatrix> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let ld = self.ld;
        let mut pivots = vec![0usize; n];
        let mut ju = 0usize;
        let a = &mut self.data;
        let at = |i: usize, j: usize| (kv + i - j) + j * ld;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = a[at(j, j)].abs();
            for p in 1..=km {
                let v = a[at(j + p, j)].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            pivots[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(SingularMatrix(j));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    a.swap(at(j, c), at(j + jp, c));
                }
            }
            let pivot = a[at(j, j)];
            let lo = at(j, j) + 1;
            a[lo..lo + km].iter_mut().for_each(|v| *v /= pivot);
            for c in j + 1..=ju {
                // rows j..=j+km of column c are contiguous, as are the multipliers
                let (left, right) = a.split_at_mut(c * ld);
                let mult = &left[lo..lo + km];
                let row_j = kv + j - c;
                let t = right[row_j];
                if t != 0.0 {
                    for (x, l) in right[row_j + 1..row_j + 1 + km].iter_mut().zip(mult) {
                        *x -= l * t;
                    }
                }
            }
        }
        Ok(BandLu {
            matrix: self,
            pivots,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    matrix: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    /// Returns the storage; its contents are the factors, not the original matrix.
    pub fn into_matrix(self) -> BandMatrix {
        self.matrix
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.matrix;
        let n = m.n;
        let kl = m.kl;
        let kv = m.kl + m.ku;
        let at = |i: usize, j: usize| (kv + i - j) + j * m.ld;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let lo = at(j, j) + 1;
                for (x, l) in b[j + 1..j + 1 + km].iter_mut().zip(&m.data[lo..lo + km]) {
                    *x -= l * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= m.data[at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let top = j.saturating_sub(kv);
                let col = &m.data[at(top, j)..at(j, j)];
                for (x, u) in b[top..j].iter_mut().zip(col) {
                    *x -= u * bj;
                }
            }
        }
    }
}
