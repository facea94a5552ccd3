//! Exact univariate solvers for one block of the additive fit.
//!
//! A block subproblem is `(1/2n) sum_k w_k (r_k - theta_k)^2 +
//! rho ||theta||_F + lambda ||theta||_n` over the values at the distinct design points. The
//! functional part is handled by [`functional_prox`]; the empirical-norm part by
//! [`group_shrink`] applied to its output, and [`kkt_univariate`] certifies
//! the composition.

mod kkt;
mod shrink;
mod sobolev;
mod trend;
mod tv;

pub use kkt::{kkt_univariate, ProxCertificate};
pub use shrink::group_shrink;
pub use sobolev::{sobolev_prox, SobolevBranch, SobolevFit};
pub use trend::{trendfilter_prox, trendfilter_solve, TrendFilterSolution, ACCEPT_GAP, TARGET_GAP};
pub use tv::tv1_prox;

use crate::error::{ensure_finite, ensure_len, invalid, Result};
use crate::model::{seminorm, ClassKind, ComponentClass};

/// Weighted smoothing subproblem at `K` distinct knots.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxProblem {
    pub targets: Vec<f64>,
    pub knots: Vec<f64>,
    pub weights: Vec<f64>,
    pub rho: f64,
    pub class: ComponentClass,
}

impl ProxProblem {
    pub fn new(targets: Vec<f64>, knots: Vec<f64>, weights: Vec<f64>, rho: f64, class: ComponentClass) -> Result<Self> {
        let prob = Self {
            targets,
            knots,
            weights,
            rho,
            class,
        };
        prob.validate()?;
        Ok(prob)
    }

    /// Unit weights.
    pub fn unweighted(targets: Vec<f64>, knots: Vec<f64>, rho: f64, class: ComponentClass) -> Result<Self> {
        let w = vec![1.0; targets.len()];
        Self::new(targets, knots, w, rho, class)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.knots.len();
        if k == 0 {
            return Err(invalid("prox problem needs at least one knot"));
        }
        ensure_len("prox targets", k, self.targets.len())?;
        ensure_len("prox weights", k, self.weights.len())?;
        ensure_finite("targets", &self.targets)?;
        ensure_finite("knots", &self.knots)?;
        ensure_finite("weights", &self.weights)?;
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(invalid("prox weights must be positive"));
        }
        if self.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("prox knots must be strictly increasing"));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("rho must be finite and nonnegative, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Sample size: the sum of the weights.
    pub fn n(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    /// `(1/2n) sum w (r - theta)^2 + rho ||theta||_F`.
    pub fn objective(&self, theta: &[f64]) -> Result<f64> {
        ensure_len("candidate", self.len(), theta.len())?;
        let n = self.n();
        let fit: f64 = self
            .targets
            .iter()
            .zip(theta)
            .zip(&self.weights)
            .map(|((r, t), w)| w * (r - t) * (r - t))
            .sum::<f64>()
            / (2.0 * n);
        let pen = if self.rho > 0.0 {
            self.rho * seminorm(self.class, &self.knots, theta)?
        } else {
            0.0
        };
        Ok(fit + pen)
    }

    /// Objective including the empirical-norm term `lambda ||theta||_n`.
    pub fn composite_objective(&self, theta: &[f64], lambda: f64) -> Result<f64> {
        let en = crate::model::empirical_norm(theta, Some(&self.weights))?;
        Ok(self.objective(theta)? + lambda * en)
    }
}

/// Minimizer of `(1/2n) sum w (r - theta)^2 + rho ||theta||_F` for the
/// problem's class.
pub fn functional_prox(prob: &ProxProblem) -> Result<Vec<f64>> {
    match (prob.class.kind, prob.class.m) {
        (ClassKind::BoundedVariation, 1) => tv1_prox(prob),
        (ClassKind::BoundedVariation, _) => trendfilter_prox(prob),
        (ClassKind::SobolevL2, _) => Ok(sobolev_prox(prob)?.values),
    }
}

/// Weighted least-squares polynomial of degree `< m` evaluated at the knots,
/// fitted in monomials of the centered and scaled knots.
pub(crate) fn polynomial_fit(prob: &ProxProblem, m: usize) -> Result<Vec<f64>> {
    let k = prob.len();
    if k <= m {
        return Ok(prob.targets.clone());
    }
    let (t, w, r) = (&prob.knots, &prob.weights, &prob.targets);
    let sw: f64 = w.iter().sum();
    let rbar = r.iter().zip(w).map(|(r, w)| w * r).sum::<f64>() / sw;
    if m == 1 {
        return Ok(vec![rbar; k]);
    }
    let tbar = t.iter().zip(w).map(|(t, w)| w * t).sum::<f64>() / sw;
    let half = (t[k - 1] - t[0]) / 2.0;
    let basis = |x: f64| -> Vec<f64> {
        let u = (x - tbar) / half;
        std::iter::successors(Some(1.0), |p| Some(p * u)).take(m).collect()
    };
    let mut gram = crate::banded::SymBand::zeros(m, m - 1);
    let mut rhs = vec![0.0; m];
    for ((x, wk), rk) in t.iter().zip(w).zip(r) {
        let b = basis(*x);
        for a in 0..m {
            rhs[a] += wk * b[a] * (rk - rbar);
            for c in 0..=a {
                gram.add(a, c, wk * b[a] * b[c]);
            }
        }
    }
    let coef = gram.cholesky()?.solve(&rhs);
    Ok(t.iter()
        .map(|x| rbar + basis(*x).iter().zip(&coef).map(|(b, c)| b * c).sum::<f64>())
        .collect())
}
