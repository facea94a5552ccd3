//! Block coordinate descent for the doubly penalized additive objective
//!
//! `K(g) = ||y - a - sum_j g_j||_n^2 / 2 + a0 sum_j (rho_j ||g_j||_F + lambda_j ||g_j||_n)`
//!
//! with an unpenalized intercept `a` and empirically centered components.

mod layout;
mod plan;

pub use plan::{ComponentPenalty, PenaltyPlan, PlanSource};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::model::{evaluate_model, AdditiveFit, ComponentFit, Dataset};
use crate::uniprox::{functional_prox, group_shrink, kkt_univariate, ProxProblem};
use layout::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepOrder {
    Cyclic,
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative objective change below which a sweep counts as stationary.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Skip components that stayed null for three sweeps, then verify with a
    /// full sweep before stopping.
    pub active_set: bool,
    /// Largest per-component KKT gap accepted at convergence.
    pub kkt_tol: f64,
    pub order: SweepOrder,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 500,
            active_set: true,
            kkt_tol: 1e-6,
            order: SweepOrder::Cyclic,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_sweeps == 0 || !(self.kkt_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "fit options need tol > 0, kkt_tol > 0 and max_sweeps >= 1 (got {}, {}, {})",
                self.tol, self.kkt_tol, self.max_sweeps
            )));
        }
        Ok(())
    }
}

const NULL_STREAK_SKIP: usize = 3;
/// Sweeps between extrapolation attempts.
const ANDERSON_DEPTH: usize = 5;
/// Total objective increase, relative, that the block updates of one sweep
/// may spend on rounding-level ties.
const SWEEP_SLACK: f64 = 5e-13;

fn check_dims(data: &Dataset, plan: &PenaltyPlan) -> Result<()> {
    ensure_len("penalty plan components", data.p(), plan.p())?;
    plan.validate()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `||y - yhat||_n^2 / 2 + a0 sum_j (rho_j seminorm_j + lambda_j empnorm_j)`.
pub fn objective(fit: &AdditiveFit, data: &Dataset, plan: &PenaltyPlan) -> Result<f64> {
    check_dims(data, plan)?;
    ensure_len("fit components", data.p(), fit.p())?;
    let yhat = predict(fit, data.x())?;
    let rss: f64 = data.y().iter().zip(&yhat).map(|(y, f)| (y - f) * (y - f)).sum();
    Ok(rss / (2.0 * data.n() as f64) + penalty(&fit.components, plan))
}

fn penalty(components: &[Option<ComponentFit>], plan: &PenaltyPlan) -> f64 {
    components
        .iter()
        .enumerate()
        .filter_map(|(j, c)| {
            c.as_ref()
                .map(|c| plan.effective_rho(j) * c.seminorm_value + plan.effective_lambda(j) * c.empnorm_value)
        })
        .sum()
}

pub fn predict(fit: &AdditiveFit, xnew: &Array2<f64>) -> Result<Array1<f64>> {
    ensure_len("covariate columns", fit.p(), xnew.ncols())?;
    xnew.rows()
        .into_iter()
        .map(|row| evaluate_model(fit, &row.to_vec()))
        .collect::<Result<Vec<f64>>>()
        .map(Array1::from)
}

/// Fits block `j` to `partial_residual`: merge ties into a weighted problem,
/// apply the functional prox with `a0 rho_j`, center, then group-shrink with
/// `a0 lambda_j`. `None` when the block is thresholded to zero.
pub fn component_update(j: usize, partial_residual: &[f64], data: &Dataset, plan: &PenaltyPlan) -> Result<Option<ComponentFit>> {
    check_dims(data, plan)?;
    ensure_len("partial residual", data.n(), partial_residual.len())?;
    let layout = Layout::new(data, j);
    let values = block_update(&layout, partial_residual, plan, j)?;
    values
        .map(|v| ComponentFit::new(plan.components[j].class, layout.knots.clone(), v, layout.mult.clone()))
        .transpose()
}

fn block_update(layout: &Layout, partial: &[f64], plan: &PenaltyPlan, j: usize) -> Result<Option<Vec<f64>>> {
    let mut targets = layout.merge(partial);
    let c = layout.weighted_mean(&targets);
    targets.iter_mut().for_each(|t| *t -= c);
    let prob = ProxProblem::new(
        targets,
        layout.knots.clone(),
        layout.weights.clone(),
        plan.effective_rho(j),
        plan.components[j].class,
    )?;
    let mut smooth = functional_prox(&prob)?;
    let c = layout.weighted_mean(&smooth);
    smooth.iter_mut().for_each(|t| *t -= c);
    let shrunk = group_shrink(&smooth, &layout.weights, plan.effective_lambda(j));
    if shrunk.iter().all(|v| *v == 0.0) {
        Ok(None)
    } else {
        Ok(Some(shrunk))
    }
}

struct State {
    layouts: Vec<Layout>,
    comps: Vec<Option<ComponentFit>>,
    contrib: Vec<Vec<f64>>,
    intercept: f64,
}

impl State {
    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        (0..n)
            .map(|i| {
                // same association order as `evaluate_model`
                let mut s = self.intercept;
                for (c, f) in self.comps.iter().zip(&self.contrib) {
                    if c.is_some() {
                        s += f[i];
                    }
                }
                y[i] - s
            })
            .collect()
    }

    fn recenter_intercept(&mut self, y: &[f64]) {
        let n = y.len();
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = y[i];
                for (c, f) in self.comps.iter().zip(&self.contrib) {
                    if c.is_some() {
                        s -= f[i];
                    }
                }
                s
            })
            .collect();
        self.intercept = mean(&v);
    }

    fn objective(&self, y: &[f64], plan: &PenaltyPlan) -> f64 {
        let r = self.residual(y);
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * y.len() as f64) + penalty(&self.comps, plan)
    }
}

fn block_objective(partial: &[f64], contrib: Option<&[f64]>, comp: Option<&ComponentFit>, plan: &PenaltyPlan, j: usize) -> f64 {
    let n = partial.len() as f64;
    let rss: f64 = match contrib {
        Some(f) => partial.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum(),
        None => partial.iter().map(|a| a * a).sum(),
    };
    let pen = comp.map_or(0.0, |c| plan.effective_rho(j) * c.seminorm_value + plan.effective_lambda(j) * c.empnorm_value);
    rss / (2.0 * n) + pen
}

/// Minimizes the penalized objective by cyclic block coordinate descent.
pub fn fit_additive(data: &Dataset, plan: &PenaltyPlan, opts: &FitOptions) -> Result<AdditiveFit> {
    check_dims(data, plan)?;
    opts.validate()?;
    let p = data.p();
    let n = data.n();
    let y = data.y().to_vec();
    let mut st = State {
        layouts: (0..p).map(|j| Layout::new(data, j)).collect(),
        comps: vec![None; p],
        contrib: vec![vec![0.0; n]; p],
        intercept: 0.0,
    };
    st.recenter_intercept(&y);
    let mut trace = vec![st.objective(&y, plan)];
    let mut null_streak = vec![0usize; p];
    let mut rng = match opts.order {
        SweepOrder::Shuffled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        SweepOrder::Cyclic => None,
    };
    let mut history: Vec<Vec<Option<Vec<f64>>>> = Vec::new();
    let mut verify = false;
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let full = !opts.active_set || verify;
        let mut skipped = false;
        let mut order: Vec<usize> = (0..p).collect();
        if let Some(r) = rng.as_mut() {
            order.shuffle(r);
        }
        let mut resid = st.residual(&y);
        let mut budget = SWEEP_SLACK * trace.last().unwrap().abs();
        for &j in &order {
            if !full && null_streak[j] >= NULL_STREAK_SKIP {
                skipped = true;
                continue;
            }
            let active = st.comps[j].is_some();
            let partial: Vec<f64> = if active {
                resid.iter().zip(&st.contrib[j]).map(|(r, f)| r + f).collect()
            } else {
                resid.clone()
            };
            let new_vals = block_update(&st.layouts[j], &partial, plan, j)?;
            let new_comp = new_vals
                .map(|v| ComponentFit::new(plan.components[j].class, st.layouts[j].knots.clone(), v, st.layouts[j].mult.clone()))
                .transpose()?;
            let new_contrib = new_comp.as_ref().map(|c| st.layouts[j].spread(&c.values));

            let old_obj = block_objective(&partial, active.then(|| st.contrib[j].as_slice()), st.comps[j].as_ref(), plan, j);
            let new_obj = block_objective(&partial, new_contrib.as_deref(), new_comp.as_ref(), plan, j);
            // The update is an exact block minimizer up to rounding in the
            // inner solve. Rounding-level rises draw on the sweep budget so a
            // stale block does not get stuck behind a tie.
            if new_obj <= old_obj + budget {
                budget -= (new_obj - old_obj).max(0.0);
                st.comps[j] = new_comp;
                st.contrib[j] = new_contrib.unwrap_or_else(|| vec![0.0; n]);
            }
            if st.comps[j].is_some() {
                null_streak[j] = 0;
                resid = partial.iter().zip(&st.contrib[j]).map(|(a, b)| a - b).collect();
            } else {
                null_streak[j] += 1;
                resid = partial;
            }
        }
        st.recenter_intercept(&y);
        let mut obj = st.objective(&y, plan);
        history.push(st.comps.iter().map(|c| c.as_ref().map(|c| c.values.clone())).collect());
        if history.len() > ANDERSON_DEPTH {
            if let Some((cand, cand_obj)) = extrapolate(&st, &history, &y, plan)? {
                if cand_obj < obj {
                    st = cand;
                    obj = cand_obj;
                }
            }
            history.clear();
            history.push(st.comps.iter().map(|c| c.as_ref().map(|c| c.values.clone())).collect());
        }
        let prev = *trace.last().unwrap();
        trace.push(obj);
        let rel = (prev - obj) / prev.abs().max(f64::MIN_POSITIVE);
        if rel < opts.tol {
            if skipped {
                verify = true;
                continue;
            }
            let gaps = block_kkt(&st, &y, plan)?;
            if gaps.iter().all(|g| *g <= opts.kkt_tol) {
                converged = true;
                break;
            }
        }
        verify = false;
    }

    Ok(AdditiveFit {
        intercept: st.intercept,
        components: st.comps,
        objective_trace: trace,
        sweeps,
        converged,
        plan: plan.clone(),
    })
}

/// Anderson extrapolation over the last sweeps' block values. Blocks that were
/// null in any stored sweep keep their current value, so exact zeros survive.
fn extrapolate(st: &State, history: &[Vec<Option<Vec<f64>>>], y: &[f64], plan: &PenaltyPlan) -> Result<Option<(State, f64)>> {
    let p = st.layouts.len();
    let live: Vec<usize> = (0..p).filter(|&j| history.iter().all(|h| h[j].is_some())).collect();
    if live.is_empty() {
        return Ok(None);
    }
    let flat = |h: &Vec<Option<Vec<f64>>>| -> Vec<f64> {
        live.iter().flat_map(|&j| h[j].as_ref().expect("live block").iter().copied()).collect()
    };
    let xs: Vec<Vec<f64>> = history.iter().map(flat).collect();
    let diffs: Vec<Vec<f64>> = xs.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
    let k = diffs.len();
    let mut gram = crate::banded::SymBand::zeros(k, k - 1);
    let mut trace = 0.0;
    for a in 0..k {
        for b in 0..=a {
            let v: f64 = diffs[a].iter().zip(&diffs[b]).map(|(u, v)| u * v).sum();
            gram.add(a, b, v);
            if a == b {
                trace += v;
            }
        }
    }
    if !(trace > 0.0) {
        return Ok(None);
    }
    for a in 0..k {
        gram.add_diag(a, 1e-10 * trace);
    }
    let Ok(chol) = gram.cholesky() else {
        return Ok(None);
    };
    let z = chol.solve(&vec![1.0; k]);
    let total: f64 = z.iter().sum();
    if !total.is_finite() || total == 0.0 {
        return Ok(None);
    }
    let mut ext = vec![0.0; xs[0].len()];
    for (zi, x) in z.iter().zip(&xs[1..]) {
        let c = zi / total;
        ext.iter_mut().zip(x).for_each(|(e, v)| *e += c * v);
    }
    let mut comps = st.comps.clone();
    let mut contrib = st.contrib.clone();
    let mut offset = 0;
    for &j in &live {
        let layout = &st.layouts[j];
        let mut v = ext[offset..offset + layout.len()].to_vec();
        offset += layout.len();
        let c = layout.weighted_mean(&v);
        v.iter_mut().for_each(|t| *t -= c);
        let comp = ComponentFit::new(plan.components[j].class, layout.knots.clone(), v, layout.mult.clone())?;
        contrib[j] = layout.spread(&comp.values);
        comps[j] = Some(comp);
    }
    let mut cand = State {
        layouts: st.layouts.clone(),
        comps,
        contrib,
        intercept: st.intercept,
    };
    cand.recenter_intercept(y);
    let obj = cand.objective(y, plan);
    Ok(Some((cand, obj)))
}

fn block_kkt(st: &State, y: &[f64], plan: &PenaltyPlan) -> Result<Vec<f64>> {
    let resid = st.residual(y);
    (0..st.layouts.len())
        .map(|j| {
            let layout = &st.layouts[j];
            let partial: Vec<f64> = match &st.comps[j] {
                Some(_) => resid.iter().zip(&st.contrib[j]).map(|(r, f)| r + f).collect(),
                None => resid.clone(),
            };
            let candidate = match &st.comps[j] {
                Some(c) => c.values.clone(),
                None => vec![0.0; layout.len()],
            };
            let prob = ProxProblem::new(
                layout.merge(&partial),
                layout.knots.clone(),
                layout.weights.clone(),
                plan.effective_rho(j),
                plan.components[j].class,
            )?;
            Ok(kkt_univariate(&prob, &candidate, plan.effective_lambda(j))?.kkt_gap)
        })
        .collect()
}

/// Per-component KKT gaps of `fit`, each evaluated at the fit's own partial
/// residuals for `data` and `plan`.
pub fn kkt_residuals(fit: &AdditiveFit, data: &Dataset, plan: &PenaltyPlan) -> Result<Vec<f64>> {
    check_dims(data, plan)?;
    ensure_len("fit components", data.p(), fit.p())?;
    let p = data.p();
    let layouts: Vec<Layout> = (0..p).map(|j| Layout::new(data, j)).collect();
    let mut contrib = Vec::with_capacity(p);
    for (j, c) in fit.components.iter().enumerate() {
        contrib.push(match c {
            Some(c) => {
                if c.knots != layouts[j].knots {
                    return Err(Error::InvalidInput(format!(
                        "component {j} knots do not match the distinct design points of column {j}"
                    )));
                }
                layouts[j].spread(&c.values)
            }
            None => vec![0.0; data.n()],
        });
    }
    let st = State {
        layouts,
        comps: fit.components.clone(),
        contrib,
        intercept: fit.intercept,
    };
    block_kkt(&st, data.y().as_slice().expect("contiguous response"), plan)
}
