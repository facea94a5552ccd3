//! Divided-difference operators on unequally spaced knots.
//!
//! `DiffOp::new(knots, m)` builds the `(K - m) x K` operator whose row `i`
//! touches columns `i..=i + m`. Order 1 is the plain first difference, order 2
//! differences the chord slopes, and higher orders follow the falling-factorial
//! recursion `D(k+1) = D(1) diag(k / (t[i+k] - t[i])) D(k)`, so that
//! `|D(m) theta|_1` tracks the total variation of the (m-1)-th derivative.

use crate::banded::SymBand;

#[derive(Debug, Clone)]
pub struct DiffOp {
    order: usize,
    cols: usize,
    rows: Vec<Vec<f64>>,
}

impl DiffOp {
    pub fn new(knots: &[f64], order: usize) -> Self {
        assert!(order >= 1, "difference order must be at least 1");
        let k = knots.len();
        if k <= order {
            return Self {
                order,
                cols: k,
                rows: Vec::new(),
            };
        }
        let mut rows: Vec<Vec<f64>> = (0..k - 1).map(|_| vec![-1.0, 1.0]).collect();
        for step in 1..order {
            let scale: Vec<f64> = (0..rows.len())
                .map(|i| step as f64 / (knots[i + step] - knots[i]))
                .collect();
            rows = (0..rows.len() - 1)
                .map(|i| {
                    let mut r = vec![0.0; step + 2];
                    for (c, v) in rows[i].iter().enumerate() {
                        r[c] -= scale[i] * v;
                    }
                    for (c, v) in rows[i + 1].iter().enumerate() {
                        r[c + 1] += scale[i + 1] * v;
                    }
                    r
                })
                .collect();
        }
        Self {
            order,
            cols: k,
            rows,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Coefficients of row `i`, acting on columns `i..=i + order`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().zip(&theta[i..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, r) in self.rows.iter().enumerate() {
            for (c, a) in r.iter().enumerate() {
                out[i + c] += a * z[i];
            }
        }
        out
    }

    /// Rows divided by their largest absolute entry, with the divisors.
    pub fn row_normalized(&self) -> (DiffOp, Vec<f64>) {
        let mut out = self.clone();
        let scales = out
            .rows
            .iter_mut()
            .map(|r| {
                let s = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                r.iter_mut().for_each(|v| *v /= s);
                s
            })
            .collect();
        (out, scales)
    }

    /// `D diag(1 / weights) D^T`, a band matrix of half bandwidth `order`.
    pub fn weighted_gram(&self, weights: &[f64]) -> SymBand {
        let nr = self.rows.len();
        let mut g = SymBand::zeros(nr, self.order);
        for i in 0..nr {
            for j in i.saturating_sub(self.order)..=i {
                // overlap of columns j..=j+order and i..=i+order
                let mut s = 0.0;
                for col in i..=(j + self.order) {
                    s += self.rows[i][col - i] * self.rows[j][col - j] / weights[col];
                }
                g.add(i, j, s);
            }
        }
        g
    }
}
