//! Weighted one-dimensional total-variation denoising by dynamic programming.
//!
//! The derivative of the forward message is a nondecreasing piecewise-linear
//! function kept as a deque of breakpoints. Each step clips it to
//! `[-lambda, lambda]`, records the two clip points, and adds the next
//! quadratic. Back-substitution clamps each value into its recorded interval.
//! Runs in `O(K)` amortized time and returns the exact minimizer.

use std::collections::VecDeque;

use super::ProxProblem;
use crate::error::{invalid, Result};
use crate::model::ClassKind;

#[derive(Debug, Clone, Copy)]
struct Knot {
    x: f64,
    // change in (slope, intercept) of the derivative when crossing left to right
    da: f64,
    db: f64,
}

/// Minimizer of `(1/2n) sum w (r - theta)^2 + rho sum |theta_{i+1} - theta_i|`.
pub fn tv1_prox(prob: &ProxProblem) -> Result<Vec<f64>> {
    prob.validate()?;
    if prob.class.kind != ClassKind::BoundedVariation || prob.class.m != 1 {
        return Err(invalid(format!("tv1_prox needs class bv1, got {}", prob.class)));
    }
    let lam = prob.rho * prob.n();
    Ok(weighted_tv_denoise(&prob.targets, &prob.weights, lam))
}

/// Minimizer of `1/2 sum w (y - theta)^2 + lam sum |theta_{i+1} - theta_i|`.
pub(crate) fn weighted_tv_denoise(y: &[f64], w: &[f64], lam: f64) -> Vec<f64> {
    let k = y.len();
    if k <= 1 || lam <= 0.0 {
        return y.to_vec();
    }
    let mut knots: VecDeque<Knot> = VecDeque::with_capacity(2 * k);
    let mut lo = vec![0.0; k - 1];
    let mut hi = vec![0.0; k - 1];

    // derivative coefficients below all knots (left) and above all knots (right)
    let (mut al, mut bl) = (w[0], -w[0] * y[0]);
    let (mut ar, mut br) = (w[0], -w[0] * y[0]);

    for i in 0..k - 1 {
        // left clip point: derivative == -lam
        let (mut a, mut b) = (al, bl);
        while let Some(kn) = knots.front() {
            if a * kn.x + b > -lam {
                break;
            }
            a += kn.da;
            b += kn.db;
            knots.pop_front();
        }
        let xl = (-lam - b) / a;
        knots.push_front(Knot {
            x: xl,
            da: a,
            db: b + lam,
        });
        lo[i] = xl;

        // right clip point: derivative == +lam
        let (mut a, mut b) = (ar, br);
        while let Some(kn) = knots.back() {
            if a * kn.x + b < lam {
                break;
            }
            a -= kn.da;
            b -= kn.db;
            knots.pop_back();
        }
        let xr = (lam - b) / a;
        knots.push_back(Knot {
            x: xr,
            da: -a,
            db: lam - b,
        });
        hi[i] = xr;

        let (wn, yn) = (w[i + 1], y[i + 1]);
        al = wn;
        bl = -lam - wn * yn;
        ar = wn;
        br = lam - wn * yn;
    }

    // zero of the final derivative
    let (mut a, mut b) = (al, bl);
    while let Some(kn) = knots.front() {
        if a * kn.x + b >= 0.0 {
            break;
        }
        a += kn.da;
        b += kn.db;
        knots.pop_front();
    }
    let mut theta = vec![0.0; k];
    theta[k - 1] = -b / a;
    for i in (0..k - 1).rev() {
        theta[i] = theta[i + 1].clamp(lo[i], hi[i]);
    }
    theta
}
