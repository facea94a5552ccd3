//! Natural polynomial splines with knots at the design points.
//!
//! For order `m` (1 or 2) the roughness `int (g^(m))^2` of the natural spline
//! interpolating `theta` equals `(D theta)^T R^{-1} (D theta)`, where `D` is the
//! order-`m` divided-difference operator and `R` is `diag(h)` for `m = 1` and the
//! usual tridiagonal `(h[j-1] + h[j]) / 3, h[j] / 6` matrix for `m = 2`.

use crate::banded::{BandCholesky, BandLeastSquares, SymBand};
use crate::diffop::DiffOp;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SplinePenalty {
    order: usize,
    d: DiffOp,
    r: SymBand,
    r_chol: Option<BandCholesky>,
}

impl SplinePenalty {
    pub fn new(knots: &[f64], order: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidInput(format!(
                "natural spline penalty supports order 1 or 2, got {order}"
            )));
        }
        let d = DiffOp::new(knots, order);
        let nr = d.nrows();
        let mut r = SymBand::zeros(nr, order - 1);
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        for j in 0..nr {
            if order == 1 {
                r.add_diag(j, h[j]);
            } else {
                r.add_diag(j, (h[j] + h[j + 1]) / 3.0);
                if j + 1 < nr {
                    r.add(j + 1, j, h[j + 1] / 6.0);
                }
            }
        }
        let r_chol = if nr > 0 { Some(r.cholesky()?) } else { None };
        Ok(Self { order, d, r, r_chol })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn diff(&self) -> &DiffOp {
        &self.d
    }

    pub fn gram(&self) -> &SymBand {
        &self.r
    }

    /// `R^{-1} D theta`: interior second derivatives (m = 2) or slopes (m = 1).
    pub fn curvature(&self, theta: &[f64]) -> Vec<f64> {
        match &self.r_chol {
            None => Vec::new(),
            Some(c) => c.solve(&self.d.apply(theta)),
        }
    }

    /// `int (g^(m))^2` for the natural spline through `theta`.
    pub fn roughness(&self, theta: &[f64]) -> f64 {
        let dt = self.d.apply(theta);
        let c = self.curvature(theta);
        dt.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    /// Rounding level of `sqrt(roughness(theta))`: the elementwise error bound
    /// of `D theta` measured in the `R^{-1}` norm.
    pub fn seminorm_rounding(&self, theta: &[f64]) -> f64 {
        let Some(chol) = &self.r_chol else {
            return 0.0;
        };
        let e: Vec<f64> = (0..self.d.nrows())
            .map(|i| {
                let abs: f64 = self.d.row(i).iter().zip(&theta[i..]).map(|(a, v)| (a * v).abs()).sum();
                (self.order + 1) as f64 * f64::EPSILON * abs
            })
            .collect();
        let c = chol.solve(&e);
        e.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// `Omega theta = D^T R^{-1} D theta`.
    pub fn omega_apply(&self, theta: &[f64]) -> Vec<f64> {
        self.d.apply_transpose(&self.curvature(theta))
    }

    /// Minimizes `1/2 sum w (r - theta)^2 + alpha/2 theta^T Omega theta` via the
    /// Reinsch system `(R + alpha D W^{-1} D^T) c = D r`. Returns `(theta, c)`.
    ///
    /// The system is solved as the least-squares problem with rows
    /// `sqrt(alpha / w) D^T` and `L^T` (`R = L L^T`), which it is the normal
    /// equation of. Closely spaced knots make `D W^{-1} D^T` nearly singular
    /// and forming it explicitly loses every digit.
    pub fn smooth(&self, targets: &[f64], weights: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let nr = self.d.nrows();
        let (Some(chol), true) = (&self.r_chol, nr > 0) else {
            return Ok((targets.to_vec(), Vec::new()));
        };
        let m = self.order;
        let k = targets.len();
        let sa = alpha.sqrt();
        let mut ls = BandLeastSquares::new(nr, m);
        let mut knot = 0;
        let mut vals = Vec::with_capacity(m + 1);
        for i in 0..nr {
            // columns of D (knots) whose first row is i
            while knot < k && knot.saturating_sub(m) == i {
                let sw = weights[knot].sqrt();
                let last = knot.min(nr - 1);
                vals.clear();
                vals.extend((i..=last).map(|row| sa / sw * self.d.row(row)[knot - row]));
                ls.add_row(i, &vals, sw * targets[knot] / sa);
                knot += 1;
            }
            vals.clear();
            vals.extend((i..(i + m).min(nr)).map(|j| chol.lower(j, j - i)));
            ls.add_row(i, &vals, 0.0);
        }
        let c = ls.solve()?;
        let corr = self.d.apply_transpose(&c);
        let theta = targets
            .iter()
            .zip(&corr)
            .zip(weights)
            .map(|((r, k), w)| r - alpha * k / w)
            .collect();
        Ok((theta, c))
    }

    /// `c^T R c`.
    pub fn r_norm_sq(&self, c: &[f64]) -> f64 {
        self.r.mul_vec(c).iter().zip(c).map(|(a, b)| a * b).sum()
    }
}

/// Second derivatives at all knots of the natural cubic spline through `values`
/// (zero at both ends).
pub fn natural_cubic_second_derivs(knots: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let k = knots.len();
    if k < 3 {
        return Ok(vec![0.0; k]);
    }
    let pen = SplinePenalty::new(knots, 2)?;
    let mut m = vec![0.0; k];
    m[1..k - 1].copy_from_slice(&pen.curvature(values));
    Ok(m)
}

/// Evaluates the natural cubic spline with knot values and second derivatives,
/// extended linearly outside the knot range.
pub fn eval_natural_cubic(knots: &[f64], values: &[f64], m2: &[f64], x: f64) -> f64 {
    let k = knots.len();
    match k {
        0 => 0.0,
        1 => values[0],
        _ => {
            if x < knots[0] {
                let h = knots[1] - knots[0];
                let slope = (values[1] - values[0]) / h - h * (2.0 * m2[0] + m2[1]) / 6.0;
                return values[0] + slope * (x - knots[0]);
            }
            if x > knots[k - 1] {
                let h = knots[k - 1] - knots[k - 2];
                let slope = (values[k - 1] - values[k - 2]) / h + h * (m2[k - 2] + 2.0 * m2[k - 1]) / 6.0;
                return values[k - 1] + slope * (x - knots[k - 1]);
            }
            let i = (knots.partition_point(|t| *t <= x)).clamp(1, k - 1) - 1;
            let h = knots[i + 1] - knots[i];
            let a = (knots[i + 1] - x) / h;
            let b = (x - knots[i]) / h;
            a * values[i]
                + b * values[i + 1]
                + ((a * a * a - a) * m2[i] + (b * b * b - b) * m2[i + 1]) * h * h / 6.0
        }
    }
}
