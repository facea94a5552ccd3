//! Closed-form penalty schedules.
//!
//! With `nu = sqrt(log(p/eps)/n)` and entropy exponent `beta`, the homogeneous
//! rate balances `gamma^2` against the entropy integral, and the capped
//! (scale-adaptive) versions clip `gamma` from above and `w` from below so
//! that `w* <= (gamma* + nu)^(1-q)` always holds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{ComponentClass, Dataset};
use crate::solver::{ComponentPenalty, PenaltyPlan, PlanSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TuningVariant {
    /// Needs no knowledge of the smoothness and sparsity budgets.
    Adaptive,
    /// Uses the budgets `mf` (sum of seminorms) and `mq` (sum of `q`-th powers
    /// of norms).
    Dependent { mf: f64, mq: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub q: f64,
    pub beta0: f64,
    pub b0star: f64,
    pub n: usize,
    pub p: usize,
    pub epsilon: f64,
    pub nu: f64,
    /// `gamma_q`, or `gamma'` for the dependent variant.
    pub gamma_q: f64,
    /// `w_q`, or `w'` for the dependent variant.
    pub w_q: f64,
    pub gamma_star: f64,
    pub w_star: f64,
    pub mf: Option<f64>,
    pub mq: Option<f64>,
}

/// `(beta, tau) = (1/m, 1/(2m + 1 - 2/r))`.
pub fn class_exponents(class: ComponentClass) -> (f64, f64) {
    (class.beta(), class.tau())
}

fn check_common(q: f64, beta0: f64, b0star: f64, n: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("q must lie in [0, 1], got {q}")));
    }
    if !(beta0 > 0.0 && beta0 < 2.0) {
        return Err(invalid(format!("beta0 must lie in (0, 2), got {beta0}")));
    }
    if !(b0star > 0.0 && b0star.is_finite()) {
        return Err(invalid(format!("b0star must be positive, got {b0star}")));
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    Ok(())
}

pub fn nu_n(n: usize, p: usize, epsilon: f64) -> Result<f64> {
    if n == 0 || p == 0 {
        return Err(invalid("n and p must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let ratio = p as f64 / epsilon;
    if !(ratio > 1.0) {
        return Err(invalid(format!("p/epsilon must exceed 1, got {ratio}")));
    }
    Ok((ratio.ln() / n as f64).sqrt())
}

/// `(gamma_q, w_q)` with `gamma_q = b0star^(2/d) n^(-1/d)`, `d = 2 + beta0 (1 - q)`.
pub fn gamma_homogeneous(q: f64, beta0: f64, b0star: f64, n: usize) -> Result<(f64, f64)> {
    check_common(q, beta0, b0star, n)?;
    let d = 2.0 + beta0 * (1.0 - q);
    let gamma = b0star.powf(2.0 / d) * (n as f64).powf(-1.0 / d);
    Ok((gamma, gamma.powf(1.0 - q)))
}

pub fn rates_scale_adaptive(q: f64, beta0: f64, b0star: f64, n: usize, p: usize, epsilon: f64) -> Result<RateParams> {
    let (gamma_q, w_q) = gamma_homogeneous(q, beta0, b0star, n)?;
    let nu = nu_n(n, p, epsilon)?;
    let w_star = w_q.max(nu.powf(1.0 - q));
    let cap = b0star * (n as f64).powf(-0.5) * nu.powf(-(1.0 - q) * beta0 / 2.0);
    Ok(RateParams {
        q,
        beta0,
        b0star,
        n,
        p,
        epsilon,
        nu,
        gamma_q,
        w_q,
        gamma_star: gamma_q.min(cap),
        w_star,
        mf: None,
        mq: None,
    })
}

/// Scale-dependent schedule; `gamma_q`/`w_q` hold `gamma'`/`w'` and
/// `gamma_star`/`w_star` hold the capped pair.
#[allow(clippy::too_many_arguments)]
pub fn rates_scale_dependent(
    q: f64,
    beta0: f64,
    b0star: f64,
    n: usize,
    p: usize,
    epsilon: f64,
    mf: f64,
    mq: f64,
) -> Result<RateParams> {
    if !(mf > 0.0 && mf.is_finite() && mq > 0.0 && mq.is_finite()) {
        return Err(invalid(format!("mf and mq must be positive, got {mf} and {mq}")));
    }
    check_common(q, beta0, b0star, n)?;
    let nu = nu_n(n, p, epsilon)?;
    let ratio = mq / mf;
    let nf = n as f64;
    let d = 2.0 + beta0 * (1.0 - q);
    let gamma_q = b0star.powf(2.0 / d) * nf.powf(-1.0 / d) * ratio.powf(-beta0 / d);
    let w_q = gamma_q.powf(1.0 - q) * ratio;
    let w_star = w_q.max(nu.powf(1.0 - q) * ratio);
    let cap = b0star * nf.powf(-0.5) * nu.powf(-(1.0 - q) * beta0 / 2.0) * ratio.powf(-beta0 / 2.0);
    Ok(RateParams {
        q,
        beta0,
        b0star,
        n,
        p,
        epsilon,
        nu,
        gamma_q,
        w_q,
        gamma_star: gamma_q.min(cap),
        w_star,
        mf: Some(mf),
        mq: Some(mq),
    })
}

/// Predicted exponent of the squared error decay, `(2 - q)/(2 + beta (1 - q))`.
pub fn rate_exponent(q: f64, beta0: f64) -> f64 {
    (2.0 - q) / (2.0 + beta0 * (1.0 - q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningSettings {
    pub q: f64,
    pub c1: f64,
    pub epsilon: f64,
    pub a0: f64,
    pub b0star: f64,
    pub variant: TuningVariant,
}

impl Default for TuningSettings {
    fn default() -> Self {
        Self {
            q: 0.0,
            c1: 1.0,
            epsilon: 0.1,
            a0: 2.0,
            b0star: 1.0,
            variant: TuningVariant::Adaptive,
        }
    }
}

pub fn rates_for(class: ComponentClass, settings: &TuningSettings, n: usize, p: usize) -> Result<RateParams> {
    let beta = class.beta();
    match settings.variant {
        TuningVariant::Adaptive => rates_scale_adaptive(settings.q, beta, settings.b0star, n, p, settings.epsilon),
        TuningVariant::Dependent { mf, mq } => {
            rates_scale_dependent(settings.q, beta, settings.b0star, n, p, settings.epsilon, mf, mq)
        }
    }
}

pub fn build_plan(data: &Dataset, classes: &[ComponentClass], settings: &TuningSettings) -> Result<PenaltyPlan> {
    if classes.len() != data.p() {
        return Err(crate::error::Error::DimensionMismatch {
            what: "component classes",
            expected: data.p(),
            found: classes.len(),
        });
    }
    build_plan_for(data.n(), classes, settings)
}

/// Plan for `n` observations and `classes.len()` covariates:
/// `lambda_j = c1 (gamma*_j + nu)`, `rho_j = lambda_j w*_j`.
pub fn build_plan_for(n: usize, classes: &[ComponentClass], settings: &TuningSettings) -> Result<PenaltyPlan> {
    if classes.is_empty() {
        return Err(invalid("at least one component class is required"));
    }
    if !(settings.c1 >= 0.0 && settings.c1.is_finite()) {
        return Err(invalid(format!("c1 must be finite and nonnegative, got {}", settings.c1)));
    }
    if !(settings.a0 >= 1.0 && settings.a0.is_finite()) {
        return Err(invalid(format!("a0 must be at least 1, got {}", settings.a0)));
    }
    let p = classes.len();
    let mut components = Vec::with_capacity(p);
    let mut nu = 0.0;
    for (j, &class) in classes.iter().enumerate() {
        let r = rates_for(class, settings, n, p)?;
        if r.w_star > 1.0 {
            return Err(invalid(format!(
                "component {j}: smoothness weight {} exceeds 1; n is too small for p/epsilon = {}",
                r.w_star,
                p as f64 / settings.epsilon
            )));
        }
        nu = r.nu;
        let lambda = settings.c1 * (r.gamma_star + r.nu);
        components.push(ComponentPenalty {
            class,
            lambda,
            rho: lambda * r.w_star,
            w: r.w_star,
            gamma: r.gamma_star,
        });
    }
    Ok(PenaltyPlan {
        components,
        c1: settings.c1,
        epsilon: settings.epsilon,
        a0: settings.a0,
        q: settings.q,
        b0star: settings.b0star,
        nu,
        p_over_epsilon: p as f64 / settings.epsilon,
        source: PlanSource::Tuned(settings.variant),
    })
}

/// Noise scale from the response alone: MAD of successive differences of the
/// centered response, scaled to a Gaussian standard deviation.
pub fn noise_scale_plugin(y: &[f64]) -> Result<f64> {
    if y.len() < 3 {
        return Err(invalid("noise scale needs at least 3 responses"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut d: Vec<f64> = y.windows(2).map(|w| ((w[1] - mean) - (w[0] - mean)).abs()).collect();
    let mid = d.len() / 2;
    d.sort_by(f64::total_cmp);
    let med = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    Ok(1.4826 * med / std::f64::consts::SQRT_2)
}
