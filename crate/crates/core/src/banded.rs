//! Symmetric positive definite band matrices and their Cholesky factorization.
//!
//! Every linear system in the univariate solvers (difference-operator Gram
//! matrices, Reinsch spline systems, interior-point Newton steps) is banded
//! with a half bandwidth of at most the smoothness order, so a plain band
//! Cholesky keeps them all linear in the number of knots.

use crate::error::{Error, Result};

/// Lower band storage: `lower[i][k]` holds entry `(i, i - k)` for `k <= bw`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    lower: Vec<Vec<f64>>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            lower: vec![vec![0.0; bw + 1]; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.lower[i][i - j]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry outside band");
        self.lower[i][i - j] += v;
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.lower[i][0] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            out[i] += self.lower[i][0] * x[i];
            for k in 1..=self.bw.min(i) {
                let a = self.lower[i][k];
                out[i] += a * x[i - k];
                out[i - k] += a * x[i];
            }
        }
        out
    }

    /// Restriction to the rows and columns in `idx` (sorted ascending).
    /// Principal submatrices of a band matrix keep the same bandwidth.
    pub fn principal(&self, idx: &[usize]) -> SymBand {
        let mut out = SymBand::zeros(idx.len(), self.bw);
        for (a, &i) in idx.iter().enumerate() {
            for b in a.saturating_sub(self.bw)..=a {
                let v = self.get(i, idx[b]);
                if v != 0.0 {
                    out.lower[a][a - b] = v;
                }
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.lower.clone();
        for i in 0..n {
            for k in (0..=bw.min(i)).rev() {
                let j = i - k;
                // l[i][k] = L(i, j)
                let mut s = l[i][k];
                let lo = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for c in lo..j {
                    s -= l[i][i - c] * l[j][j - c];
                }
                if k == 0 {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SolverFailure(format!(
                            "band matrix not positive definite at pivot {i} (value {s:e})"
                        )));
                    }
                    l[i][0] = s.sqrt();
                } else {
                    l[i][k] = s / l[j][0];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<Vec<f64>>,
}

impl BandCholesky {
    /// `L(i, i - k)` of the factor `L L^T`.
    pub fn lower(&self, i: usize, k: usize) -> f64 {
        if k <= self.bw.min(i) {
            self.l[i][k]
        } else {
            0.0
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = x[i];
            for k in 1..=self.bw.min(i) {
                s -= self.l[i][k] * x[i - k];
            }
            x[i] = s / self.l[i][0];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in 1..=self.bw.min(n - 1 - i) {
                s -= self.l[i + k][k] * x[i + k];
            }
            x[i] = s / self.l[i][0];
        }
    }
}

/// Least squares `min |A x - b|` for a tall `A` whose rows each span at most
/// `bw + 1` consecutive columns, by Givens rotations into an upper band
/// triangle. Rows should arrive in order of their first column, so that fill
/// stays inside the band.
#[derive(Debug, Clone)]
pub struct BandLeastSquares {
    bw: usize,
    /// `u[i][k] = U(i, i + k)`.
    u: Vec<Vec<f64>>,
    z: Vec<f64>,
}

impl BandLeastSquares {
    pub fn new(n: usize, bw: usize) -> Self {
        Self {
            bw,
            u: vec![vec![0.0; bw + 1]; n],
            z: vec![0.0; n],
        }
    }

    /// Adds the row with entries `values` at columns `start..start + values.len()`.
    pub fn add_row(&mut self, start: usize, values: &[f64], rhs: f64) {
        let n = self.u.len();
        let bw = self.bw;
        assert!(values.len() <= bw + 1 && start + values.len() <= n, "row outside the band");
        let mut v = vec![0.0; 2 * bw + 2];
        v[..values.len()].copy_from_slice(values);
        let mut beta = rhs;
        // v[c] holds the entry at column j + c
        let mut j = start;
        while j < n {
            let x = v[0];
            if x != 0.0 {
                let d = self.u[j][0];
                let r = d.hypot(x);
                let (c, s) = (d / r, x / r);
                let row = &mut self.u[j];
                for k in 0..=bw.min(n - 1 - j) {
                    let (a, b) = (row[k], v[k]);
                    row[k] = c * a + s * b;
                    v[k] = c * b - s * a;
                }
                let zj = self.z[j];
                self.z[j] = c * zj + s * beta;
                beta = c * beta - s * zj;
            }
            v.rotate_left(1);
            let last = v.len() - 1;
            v[last] = 0.0;
            j += 1;
            if v.iter().all(|e| *e == 0.0) {
                break;
            }
        }
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.u.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let row = &self.u[i];
            if !(row[0] != 0.0 && row[0].is_finite()) {
                return Err(Error::SolverFailure(format!("least-squares system is rank deficient at column {i}")));
            }
            let mut s = self.z[i];
            for k in 1..=self.bw.min(n - 1 - i) {
                s -= row[k] * x[i + k];
            }
            x[i] = s / row[0];
        }
        Ok(x)
    }
}
