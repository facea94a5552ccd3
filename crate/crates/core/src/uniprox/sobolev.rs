//! Norm-penalized smoothing splines for the L2-Sobolev classes of order 1 and 2.
//!
//! The penalty `rho ||g^(m)||_L2` is not squared, so the minimizer is found by
//! matching it to an ordinary smoothing spline with penalty `rho' ||g^(m)||^2`:
//! stationarity of both problems coincides when `rho' = rho / (2 s)` with
//! `s = ||g^(m)||_L2` at the solution. We root-find on the squared-penalty
//! parameter. When the residual of the degree `m - 1` polynomial fit has dual
//! norm at most `rho`, the solution is that polynomial (`s = 0`).

use super::kkt::solve_transpose;
use super::{polynomial_fit, ProxProblem};
use crate::error::{invalid, Error, Result};
use crate::model::{ClassKind, ComponentClass, ComponentFit};
use crate::spline::SplinePenalty;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolevBranch {
    /// `rho = 0` or too few knots: the interpolant.
    Interpolant,
    /// The polynomial fit already satisfies the optimality condition.
    NullSpace,
    /// Interior solution of the self-consistency equation.
    Smoothing,
}

#[derive(Debug, Clone)]
pub struct SobolevFit {
    pub values: Vec<f64>,
    /// `||g^(m)||_L2` of the fitted natural spline.
    pub seminorm: f64,
    /// Equivalent squared-penalty parameter, for the smoothing branch.
    pub rho_prime: Option<f64>,
    /// `|rho' - rho / (2 s)| / rho'` at the returned solution (0 off the smoothing branch).
    pub self_consistency: f64,
    /// Dual norm of the polynomial-fit residual (`+inf` when not computed).
    pub null_dual_norm: f64,
    pub branch: SobolevBranch,
}

impl SobolevFit {
    pub fn to_component(&self, prob: &ProxProblem) -> Result<ComponentFit> {
        let mult = prob.weights.iter().map(|w| w.round().max(1.0) as u32).collect();
        ComponentFit::new(prob.class, prob.knots.clone(), self.values.clone(), mult)
    }
}

const MAX_BRACKET: usize = 80;
const MAX_ROOT_ITER: usize = 300;

pub fn sobolev_prox(prob: &ProxProblem) -> Result<SobolevFit> {
    prob.validate()?;
    let ComponentClass { kind, m } = prob.class;
    if kind != ClassKind::SobolevL2 {
        return Err(invalid(format!("sobolev_prox needs a Sobolev class, got {}", prob.class)));
    }
    let m = m as usize;
    let k = prob.len();
    if k < m {
        return Err(invalid(format!("Sobolev order {m} needs at least {m} knots, got {k}")));
    }
    let interp = || SobolevFit {
        values: prob.targets.clone(),
        seminorm: 0.0,
        rho_prime: None,
        self_consistency: 0.0,
        null_dual_norm: f64::INFINITY,
        branch: SobolevBranch::Interpolant,
    };
    if k == m {
        return Ok(interp());
    }
    let pen = SplinePenalty::new(&prob.knots, m)?;
    if prob.rho == 0.0 {
        let mut f = interp();
        f.seminorm = pen.roughness(&prob.targets).sqrt();
        return Ok(f);
    }
    let n = prob.n();
    let r = &prob.targets;
    let w = &prob.weights;
    let target = n * prob.rho;

    let values = polynomial_fit(prob, m)?;
    let resid: Vec<f64> = r.iter().zip(&values).zip(w).map(|((r, v), w)| w * (r - v)).collect();
    let c_inf = solve_transpose(&prob.knots, m, &resid);
    let limit = pen.r_norm_sq(&c_inf).max(0.0).sqrt();
    let dual_norm = limit / n;
    if limit <= target {
        return Ok(SobolevFit {
            values,
            seminorm: 0.0,
            rho_prime: None,
            self_consistency: 0.0,
            null_dual_norm: dual_norm,
            branch: SobolevBranch::NullSpace,
        });
    }

    // phi(alpha) = alpha * s(alpha) increases from 0 to `limit`; solve phi = target.
    let phi = |log_alpha: f64| -> Result<(f64, Vec<f64>, f64)> {
        let alpha = log_alpha.exp();
        let (theta, c) = pen.smooth(r, w, alpha)?;
        let s = pen.r_norm_sq(&c).max(0.0).sqrt();
        Ok((alpha * s, theta, s))
    };
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let mut v = phi(0.0)?.0;
    let mut found = false;
    if v < target {
        for _ in 0..MAX_BRACKET {
            hi += 2.0;
            v = phi(hi)?.0;
            if v >= target {
                found = true;
                break;
            }
            lo = hi;
        }
    } else {
        for _ in 0..MAX_BRACKET {
            lo -= 2.0;
            v = phi(lo)?.0;
            if v < target {
                found = true;
                break;
            }
            hi = lo;
        }
    }
    if !found {
        return Err(Error::SolverFailure(format!(
            "smoothing-spline root find could not bracket alpha*s = {target:e} \
             (last value {v:e} in log-alpha [{lo}, {hi}], null-space limit {limit:e})"
        )));
    }

    let g = |p: f64| p.ln() - target.ln();
    let (mut glo, mut ghi) = (g(phi(lo)?.0), g(phi(hi)?.0));
    let mut side = 0i32;
    let mut best: Option<(f64, Vec<f64>, f64, f64)> = None;
    for _ in 0..MAX_ROOT_ITER {
        // Illinois-modified regula falsi, falling back to bisection
        let mut mid = (lo * ghi - hi * glo) / (ghi - glo);
        if !mid.is_finite() || mid <= lo || mid >= hi {
            mid = 0.5 * (lo + hi);
        }
        let (p, theta, s) = phi(mid)?;
        let gm = g(p);
        let rel = (1.0 - target / p).abs();
        if best.as_ref().is_none_or(|b| rel < b.3) {
            best = Some((mid, theta, s, rel));
        }
        if rel <= 1e-13 || (hi - lo) <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
        if gm < 0.0 {
            lo = mid;
            glo = gm;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            ghi = gm;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    let (log_alpha, values, s, rel) = best.expect("root iteration ran at least once");
    let rho_prime = log_alpha.exp() / (2.0 * n);
    Ok(SobolevFit {
        values,
        seminorm: s,
        rho_prime: Some(rho_prime),
        self_consistency: rel,
        null_dual_norm: dual_norm,
        branch: SobolevBranch::Smoothing,
    })
}
