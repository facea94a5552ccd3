//! Trend filtering on unequally spaced knots.
//!
//! Solves `1/2 sum w (r - x)^2 + lam ||D x||_1` (with `lam = n rho`) through its
//! box-constrained dual `min 1/2 z^T Q z - b^T z, |z_i| <= lam_i`. The rows of
//! `D` are first normalized to unit largest entry, which turns the single
//! bound into per-row bounds `lam_i = lam s_i` and keeps `Q = D W^{-1} D^T`
//! from mixing wildly different scales on uneven grids. A primal-dual interior
//! point method gets close; a primal-dual active-set iteration on the box QP
//! then solves the identified face exactly and certifies it.

use super::kkt::solve_transpose;
use super::{polynomial_fit, ProxProblem};
use crate::banded::SymBand;
use crate::diffop::DiffOp;
use crate::error::{invalid, Error, Result};
use crate::model::ClassKind;

const GAP_TOL: f64 = 1e-11;
/// Target relative gap; reached on well-conditioned problems.
pub const TARGET_GAP: f64 = 1e-9;
/// Largest relative gap returned without error. Order 3 and higher on very
/// uneven grids can floor above the target in double precision.
pub const ACCEPT_GAP: f64 = 1e-6;
const MAX_ITER: usize = 200;
const MAX_LS_ITER: usize = 40;
const MAX_ACTIVE_SET_ITER: usize = 100;
const REFINE_STEPS: usize = 2;
const ALPHA: f64 = 0.01;
const BETA: f64 = 0.5;
const MU: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct TrendFilterSolution {
    pub theta: Vec<f64>,
    /// Dual variable scaled to the box `[-1, 1]`.
    pub dual: Vec<f64>,
    /// Duality gap of the returned pair relative to the primal objective.
    pub relative_gap: f64,
    pub iterations: usize,
    /// The active-set refinement certified the solution.
    pub polished: bool,
    /// Relative roundoff level of evaluating the objective at `theta`:
    /// `eps sum_i lam_i ||D_i||_1 max|theta|` over the primal value. On very
    /// uneven grids this exceeds the target gap and bounds what any method
    /// can certify in double precision.
    pub gap_floor: f64,
}

/// Minimizer of `(1/2n) sum w (r - theta)^2 + rho ||D(m) theta||_1`.
pub fn trendfilter_prox(prob: &ProxProblem) -> Result<Vec<f64>> {
    trendfilter_solve(prob).map(|s| s.theta)
}

pub fn trendfilter_solve(prob: &ProxProblem) -> Result<TrendFilterSolution> {
    prob.validate()?;
    if prob.class.kind != ClassKind::BoundedVariation || prob.class.m < 2 {
        return Err(invalid(format!("trendfilter_prox needs class bvM with M >= 2, got {}", prob.class)));
    }
    let m = prob.class.m as usize;
    let k = prob.len();
    let exact = |theta: Vec<f64>, dual: Vec<f64>| TrendFilterSolution {
        theta,
        dual,
        relative_gap: 0.0,
        iterations: 0,
        polished: true,
        gap_floor: 0.0,
    };
    if prob.rho == 0.0 || k <= m {
        return Ok(exact(prob.targets.clone(), vec![0.0; k.saturating_sub(m)]));
    }
    let lam0 = prob.rho * prob.n();
    let w = &prob.weights;
    let r = &prob.targets;
    let (d, scales) = DiffOp::new(&prob.knots, m).row_normalized();
    let lam: Vec<f64> = scales.iter().map(|s| lam0 * s).collect();
    let q = d.weighted_gram(w);
    let b = d.apply(r);
    let to_unit = |z: &[f64]| z.iter().zip(&lam).map(|(z, l)| z / l).collect::<Vec<f64>>();

    // Dual of the polynomial fit inside the box: the fit is the solution.
    let poly = polynomial_fit(prob, m)?;
    let e: Vec<f64> = r.iter().zip(&poly).zip(w).map(|((r, p), w)| w * (r - p)).collect();
    let z_poly: Vec<f64> = solve_transpose(&prob.knots, m, &e).iter().zip(&scales).map(|(z, s)| z * s).collect();
    if z_poly.iter().zip(&lam).all(|(z, l)| z.abs() <= *l) {
        return Ok(exact(poly, to_unit(&z_poly)));
    }

    let ipm = interior_point(&d, &q, &b, r, w, &lam);
    let primal_scale = primal_value(&d, r, w, &ipm.z, &lam).max(f64::MIN_POSITIVE);
    let mut best = TrendFilterSolution {
        theta: primal_from_dual(&d, r, w, &ipm.z),
        dual: to_unit(&ipm.z),
        relative_gap: ipm.gap / primal_scale,
        iterations: ipm.iterations,
        polished: false,
        gap_floor: 0.0,
    };
    let mut faces: Vec<Vec<i8>> = Vec::new();
    faces.extend(active_set(&q, &b, &lam, &ipm.z));
    for rel in [1e-7, 1e-5, 1e-3] {
        faces.push(threshold_face(&lam, &ipm.z, rel));
    }
    for bound in &faces {
        let mut cands = Vec::with_capacity(2);
        if m == 2 {
            cands.extend(linear_active_set(&prob.knots, r, w, &d, &scales, &lam, bound));
        }
        cands.extend(solve_face(&q, &b, &lam, bound).and_then(|z| certify(&d, r, w, &lam, z, bound)));
        for (x, z, gap) in cands {
            let rel_gap = gap.max(0.0) / primal_scale;
            if rel_gap < best.relative_gap || (!best.polished && rel_gap <= best.relative_gap.max(1e-14)) {
                best.theta = x;
                best.dual = to_unit(&z);
                best.relative_gap = rel_gap;
                best.polished = true;
            }
        }
    }
    let xmax = best.theta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let row_l1: f64 = (0..d.nrows())
        .map(|i| lam[i] * d.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    best.gap_floor = f64::EPSILON * row_l1 * xmax / primal_scale;
    if best.relative_gap > ACCEPT_GAP {
        return Err(Error::SolverFailure(format!(
            "trend filter stalled at relative duality gap {:e} after {} iterations",
            best.relative_gap, best.iterations
        )));
    }
    Ok(best)
}

struct IpmResult {
    z: Vec<f64>,
    gap: f64,
    iterations: usize,
}

fn primal_from_dual(d: &DiffOp, r: &[f64], w: &[f64], z: &[f64]) -> Vec<f64> {
    let dz = d.apply_transpose(z);
    r.iter().zip(&dz).zip(w).map(|((r, a), w)| r - a / w).collect()
}

fn penalty(dx: &[f64], lam: &[f64]) -> f64 {
    dx.iter().zip(lam).map(|(v, l)| l * v.abs()).sum()
}

fn primal_value(d: &DiffOp, r: &[f64], w: &[f64], z: &[f64], lam: &[f64]) -> f64 {
    let x = primal_from_dual(d, r, w, z);
    let fit: f64 = x.iter().zip(r).zip(w).map(|((x, r), w)| 0.5 * w * (x - r) * (x - r)).sum();
    fit + penalty(&d.apply(&x), lam)
}

/// Duality gap `sum lam_i |(D x)_i| - z^T D x` at `x = r - W^{-1} D^T z`.
fn duality_gap(d: &DiffOp, r: &[f64], w: &[f64], z: &[f64], lam: &[f64]) -> f64 {
    gap_at(d, &primal_from_dual(d, r, w, z), z, lam)
}

fn gap_at(d: &DiffOp, x: &[f64], z: &[f64], lam: &[f64]) -> f64 {
    let dx = d.apply(x);
    penalty(&dx, lam) - dx.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
}

fn interior_point(d: &DiffOp, q: &SymBand, b: &[f64], r: &[f64], w: &[f64], lam: &[f64]) -> IpmResult {
    let nr = b.len();
    let mut z = vec![0.0; nr];
    let mut mu1 = vec![1.0; nr];
    let mut mu2 = vec![1.0; nr];
    let mut f1: Vec<f64> = lam.iter().map(|l| -l).collect();
    let mut f2 = f1.clone();
    let mut t = 1e-10;
    let mut step = f64::INFINITY;
    let mut best = (z.clone(), f64::INFINITY, 0);
    let scale = primal_value(d, r, w, &z, lam).max(f64::MIN_POSITIVE);

    let residual_norm = |qz: &[f64], mu1: &[f64], mu2: &[f64], f1: &[f64], f2: &[f64], inv_t: f64| {
        let mut ss = 0.0;
        for i in 0..nr {
            let rd = qz[i] - b[i] + mu1[i] - mu2[i];
            let c1 = -mu1[i] * f1[i] - inv_t;
            let c2 = -mu2[i] * f2[i] - inv_t;
            ss += rd * rd + c1 * c1 + c2 * c2;
        }
        ss.sqrt()
    };

    for iter in 0..MAX_ITER {
        let gap = duality_gap(d, r, w, &z, lam).max(0.0);
        if gap < best.1 {
            best = (z.clone(), gap, iter);
        }
        if gap <= GAP_TOL * scale {
            break;
        }
        if step >= 0.2 {
            t = (2.0 * nr as f64 * MU / gap).max(1.2 * t);
        }
        let qz = q.mul_vec(&z);
        let inv_t = 1.0 / t;

        let mut s = q.clone();
        for i in 0..nr {
            s.add_diag(i, -(mu1[i] / f1[i] + mu2[i] / f2[i]));
        }
        let rhs: Vec<f64> = (0..nr).map(|i| -qz[i] + b[i] + inv_t / f1[i] - inv_t / f2[i]).collect();
        let dz = match s.cholesky() {
            Ok(c) => c.solve(&rhs),
            Err(_) => break,
        };
        let dmu1: Vec<f64> = (0..nr).map(|i| -(mu1[i] + (inv_t + dz[i] * mu1[i]) / f1[i])).collect();
        let dmu2: Vec<f64> = (0..nr).map(|i| -(mu2[i] + (inv_t - dz[i] * mu2[i]) / f2[i])).collect();
        let res0 = residual_norm(&qz, &mu1, &mu2, &f1, &f2, inv_t);

        step = 1.0;
        for i in 0..nr {
            if dmu1[i] < 0.0 {
                step = step.min(-0.99 * mu1[i] / dmu1[i]);
            }
            if dmu2[i] < 0.0 {
                step = step.min(-0.99 * mu2[i] / dmu2[i]);
            }
            if dz[i] > 0.0 {
                step = step.min(-0.99 * f1[i] / dz[i]);
            }
            if dz[i] < 0.0 {
                step = step.min(0.99 * f2[i] / dz[i]);
            }
        }
        let mut accepted = false;
        for _ in 0..MAX_LS_ITER {
            let nz: Vec<f64> = (0..nr).map(|i| z[i] + step * dz[i]).collect();
            let nmu1: Vec<f64> = (0..nr).map(|i| mu1[i] + step * dmu1[i]).collect();
            let nmu2: Vec<f64> = (0..nr).map(|i| mu2[i] + step * dmu2[i]).collect();
            let nf1: Vec<f64> = nz.iter().zip(lam).map(|(v, l)| v - l).collect();
            let nf2: Vec<f64> = nz.iter().zip(lam).map(|(v, l)| -v - l).collect();
            let res = residual_norm(&q.mul_vec(&nz), &nmu1, &nmu2, &nf1, &nf2, inv_t);
            if res <= (1.0 - ALPHA * step) * res0 {
                z = nz;
                mu1 = nmu1;
                mu2 = nmu2;
                f1 = nf1;
                f2 = nf2;
                accepted = true;
                break;
            }
            step *= BETA;
        }
        if !accepted {
            break;
        }
    }
    let gap = duality_gap(d, r, w, &z, lam).max(0.0);
    if gap < best.1 {
        best = (z, gap, MAX_ITER);
    }
    IpmResult {
        z: best.0,
        gap: best.1,
        iterations: best.2,
    }
}

/// Solves the box QP on the face where `bound[i]` fixes `z_i` at `+-lam_i` and
/// leaves the other coordinates free.
fn solve_face(q: &SymBand, b: &[f64], lam: &[f64], bound: &[i8]) -> Option<Vec<f64>> {
    let nr = b.len();
    let mut z: Vec<f64> = (0..nr).map(|i| bound[i] as f64 * lam[i]).collect();
    let free: Vec<usize> = (0..nr).filter(|&i| bound[i] == 0).collect();
    if !free.is_empty() {
        let qz = q.mul_vec(&z);
        let rhs: Vec<f64> = free.iter().map(|&i| b[i] - qz[i]).collect();
        let sub = q.principal(&free);
        let chol = sub.cholesky().ok()?;
        let mut sol = chol.solve(&rhs);
        for _ in 0..REFINE_STEPS {
            let res: Vec<f64> = sub.mul_vec(&sol).iter().zip(&rhs).map(|(a, b)| b - a).collect();
            let corr = chol.solve(&res);
            sol.iter_mut().zip(corr).for_each(|(s, c)| *s += c);
        }
        for (&i, v) in free.iter().zip(sol) {
            z[i] = v;
        }
    }
    Some(z)
}

/// Checks box feasibility of free coordinates and the sign of `D x` on bound
/// ones; returns the clamped dual and its gap when both hold.
fn certify(d: &DiffOp, r: &[f64], w: &[f64], lam: &[f64], mut z: Vec<f64>, bound: &[i8]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    for i in 0..z.len() {
        if bound[i] == 0 {
            if z[i].abs() > lam[i] * (1.0 + 1e-12) {
                return None;
            }
            z[i] = z[i].clamp(-lam[i], lam[i]);
        }
    }
    let x = primal_from_dual(d, r, w, &z);
    let dx = d.apply(&x);
    let scale = dx.iter().chain(&x).fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..z.len() {
        if bound[i] as f64 * dx[i] < -1e-12 * scale {
            return None;
        }
    }
    let gap = gap_at(d, &x, &z, lam);
    Some((x, z, gap))
}

/// Primal-dual active-set iteration for the box QP started from `z0`;
/// returns the face it settles on.
fn active_set(q: &SymBand, b: &[f64], lam: &[f64], z0: &[f64]) -> Option<Vec<i8>> {
    let nr = b.len();
    let mut z = z0.to_vec();
    let mut bound: Vec<i8> = vec![0; nr];
    for it in 0..MAX_ACTIVE_SET_ITER {
        let g: Vec<f64> = q.mul_vec(&z).iter().zip(b).map(|(a, b)| a - b).collect();
        let next: Vec<i8> = (0..nr)
            .map(|i| {
                let trial = z[i] - g[i] / q.get(i, i);
                if trial >= lam[i] {
                    1
                } else if trial <= -lam[i] {
                    -1
                } else {
                    0
                }
            })
            .collect();
        if it > 0 && next == bound {
            return Some(bound);
        }
        bound = next;
        z = solve_face(q, b, lam, &bound)?;
    }
    None
}

/// Binds coordinates with `|z_i| >= lam_i (1 - rel)`.
fn threshold_face(lam: &[f64], z: &[f64], rel: f64) -> Vec<i8> {
    z.iter()
        .zip(lam)
        .map(|(z, l)| if z.abs() >= l * (1.0 - rel) { z.signum() as i8 } else { 0 })
        .collect()
}

/// Order 2: on a face the fit is continuous piecewise linear with breaks only
/// at the middle knots of bound rows. Solving for the break values directly
/// keeps the free rows of `D x` at zero up to rounding, which the dual route
/// cannot do on uneven grids. The dual is recovered from `D^T z = W (r - x)`
/// and is not clamped.
#[allow(clippy::too_many_arguments)]
fn linear_face(
    t: &[f64],
    r: &[f64],
    w: &[f64],
    d: &DiffOp,
    scales: &[f64],
    lam: &[f64],
    bound: &[i8],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = t.len();
    let mut brk = vec![0usize];
    brk.extend((0..bound.len()).filter(|&i| bound[i] != 0).map(|i| i + 1));
    brk.push(k - 1);
    let nb = brk.len();
    let zb: Vec<f64> = bound.iter().zip(lam).map(|(s, l)| *s as f64 * l).collect();
    let g = d.apply_transpose(&zb);

    let mut seg = 0;
    let coef: Vec<(usize, f64)> = (0..k)
        .map(|j| {
            while seg + 2 < nb && j >= brk[seg + 1] {
                seg += 1;
            }
            let (lo, hi) = (brk[seg], brk[seg + 1]);
            (seg, (t[j] - t[lo]) / (t[hi] - t[lo]))
        })
        .collect();
    let mut a = SymBand::zeros(nb, 1);
    let mut rhs = vec![0.0; nb];
    for (j, &(sg, u)) in coef.iter().enumerate() {
        let (c0, c1) = (1.0 - u, u);
        a.add(sg, sg, w[j] * c0 * c0);
        a.add(sg + 1, sg + 1, w[j] * c1 * c1);
        a.add(sg + 1, sg, w[j] * c0 * c1);
        let y = w[j] * r[j] - g[j];
        rhs[sg] += c0 * y;
        rhs[sg + 1] += c1 * y;
    }
    let beta = a.cholesky().ok()?.solve(&rhs);
    let x: Vec<f64> = coef.iter().map(|&(sg, u)| (1.0 - u) * beta[sg] + u * beta[sg + 1]).collect();

    let e: Vec<f64> = r.iter().zip(&x).zip(w).map(|((r, x), w)| w * (r - x)).collect();
    let z: Vec<f64> = solve_transpose(t, 2, &e).iter().zip(scales).map(|(z, s)| z * s).collect();
    Some((x, z))
}

/// Active-set iteration on the order-2 face parametrization: free rows whose
/// dual leaves the box get bound, bound rows whose slope change has the wrong
/// sign get freed. Returns the certified pair and its gap.
fn linear_active_set(
    t: &[f64],
    r: &[f64],
    w: &[f64],
    d: &DiffOp,
    scales: &[f64],
    lam: &[f64],
    start: &[i8],
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut bound = start.to_vec();
    for _ in 0..MAX_ACTIVE_SET_ITER {
        let (x, mut z) = linear_face(t, r, w, d, scales, lam, &bound)?;
        let dx = d.apply(&x);
        let xmax = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let next: Vec<i8> = (0..bound.len())
            .map(|i| match bound[i] {
                0 if z[i].abs() > lam[i] * (1.0 + 1e-9) => z[i].signum() as i8,
                0 => 0,
                s if (s as f64) * dx[i] < -1e-13 * xmax => 0,
                s => s,
            })
            .collect();
        if next == bound {
            for (zi, l) in z.iter_mut().zip(lam) {
                *zi = zi.clamp(-l, *l);
            }
            let gap = gap_at(d, &x, &z, lam);
            return Some((x, z, gap));
        }
        bound = next;
    }
    None
}
