use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{error_n, error_q_mc, generate, loglog_slope, Scenario};
use crate::error::{invalid, Result};
use crate::model::ComponentClass;
use crate::solver::{fit_additive, FitOptions};
use crate::tuning::{build_plan, noise_scale_plugin, rate_exponent, TuningSettings};

/// How the noise constant `c1` is set in each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum C1Choice {
    Fixed { value: f64 },
    /// `factor` times the plug-in noise scale of the cell's response.
    Plugin { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyConfig {
    /// Scenario whose `n` and `seed` are replaced per cell.
    pub template: Scenario,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    /// One class per covariate, or a single class used for all.
    pub classes: Vec<ComponentClass>,
    pub tuning: TuningSettings,
    pub c1: C1Choice,
    pub fit: FitOptions,
    pub n_mc: usize,
    pub seed: u64,
}

impl RateStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 3 {
            return Err(invalid(format!("n_grid needs at least 3 sizes, got {}", self.n_grid.len())));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] < 2 {
            return Err(invalid("n_grid must be strictly increasing with sizes >= 2"));
        }
        if self.reps < 3 {
            return Err(invalid(format!("reps must be at least 3, got {}", self.reps)));
        }
        if self.n_mc == 0 {
            return Err(invalid("n_mc must be at least 1"));
        }
        if self.classes.len() != 1 && self.classes.len() != self.template.p {
            return Err(invalid(format!(
                "classes must have length 1 or p = {}, got {}",
                self.template.p,
                self.classes.len()
            )));
        }
        match self.c1 {
            C1Choice::Fixed { value } if !(value >= 0.0 && value.is_finite()) => {
                return Err(invalid(format!("c1 must be finite and nonnegative, got {value}")))
            }
            C1Choice::Plugin { factor } if !(factor >= 0.0 && factor.is_finite()) => {
                return Err(invalid(format!("c1 factor must be finite and nonnegative, got {factor}")))
            }
            _ => {}
        }
        self.fit.validate()?;
        Scenario {
            n: self.n_grid[0],
            ..self.template.clone()
        }
        .validate()
    }

    fn classes_for_p(&self) -> Vec<ComponentClass> {
        if self.classes.len() == 1 {
            vec![self.classes[0]; self.template.p]
        } else {
            self.classes.clone()
        }
    }

    /// Largest `beta` among the classes, used for the theoretical exponent.
    pub fn beta(&self) -> f64 {
        self.classes.iter().map(|c| c.beta()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub error_n: f64,
    pub error_q: f64,
    pub error_q_se: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub active: usize,
    /// Failure message; error fields are `NaN` when set.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyResult {
    pub grid: Vec<usize>,
    pub reps: usize,
    /// Cells ordered by `(n, rep)`.
    pub cells: Vec<RateCell>,
    /// Mean squared errors per grid size over successful cells.
    pub mean_error_n: Vec<f64>,
    pub mean_error_q: Vec<f64>,
    pub slope_n: Option<SlopeFit>,
    pub slope_q: Option<SlopeFit>,
    /// Predicted slope `-(2 - q)/(2 + beta (1 - q))`.
    pub theoretical_slope: f64,
    /// Errors vanish (or too many cells failed), so no slope is defined.
    pub degenerate: bool,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of cell `(grid index, rep)`.
pub fn cell_seed(base: u64, gi: usize, rep: usize) -> u64 {
    splitmix(splitmix(base ^ splitmix(gi as u64)) ^ rep as u64)
}

const DEGENERATE_ERROR: f64 = 1e-20;

fn run_cell(cfg: &RateStudyConfig, classes: &[ComponentClass], gi: usize, rep: usize) -> RateCell {
    let n = cfg.n_grid[gi];
    let seed = cell_seed(cfg.seed, gi, rep);
    let mut cell = RateCell {
        n,
        rep,
        seed,
        error_n: f64::NAN,
        error_q: f64::NAN,
        error_q_se: f64::NAN,
        sweeps: 0,
        converged: false,
        active: 0,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let scenario = Scenario {
            n,
            seed,
            ..cfg.template.clone()
        };
        let (data, truth) = generate(&scenario)?;
        let c1 = match cfg.c1 {
            C1Choice::Fixed { value } => value,
            C1Choice::Plugin { factor } => factor * noise_scale_plugin(data.y().as_slice().expect("contiguous"))?,
        };
        let settings = TuningSettings { c1, ..cfg.tuning };
        let plan = build_plan(&data, classes, &settings)?;
        let fit = fit_additive(&data, &plan, &cfg.fit)?;
        cell.error_n = error_n(&fit, &truth, &data)?;
        let q = error_q_mc(&fit, &truth, scenario.covariates, cfg.n_mc, splitmix(seed))?;
        cell.error_q = q.mean;
        cell.error_q_se = q.stderr;
        cell.sweeps = fit.sweeps;
        cell.converged = fit.converged;
        cell.active = fit.active_set().len();
        Ok(())
    })();
    if let Err(e) = outcome {
        cell.failure = Some(e.to_string());
        cell.error_n = f64::NAN;
        cell.error_q = f64::NAN;
        cell.error_q_se = f64::NAN;
    }
    cell
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Runs every `(n, rep)` cell (in parallel), then fits log-log slopes of the
/// mean errors against `n`. Cell failures are recorded, not raised.
pub fn rate_study(cfg: &RateStudyConfig) -> Result<RateStudyResult> {
    cfg.validate()?;
    let classes = cfg.classes_for_p();
    let keys: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|gi| (0..cfg.reps).map(move |r| (gi, r)))
        .collect();
    let cells: Vec<RateCell> = keys.par_iter().map(|&(gi, rep)| run_cell(cfg, &classes, gi, rep)).collect();

    let mut mean_n = Vec::new();
    let mut mean_q = Vec::new();
    for &n in &cfg.n_grid {
        let of_n = || cells.iter().filter(move |c| c.n == n && c.failure.is_none());
        mean_n.push(mean_of(of_n().map(|c| c.error_n)));
        mean_q.push(mean_of(of_n().map(|c| c.error_q)));
    }
    let xs: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    let usable = |m: &[f64]| m.iter().all(|v| v.is_finite() && *v > DEGENERATE_ERROR);
    let fit_slope = |m: &[f64]| {
        if usable(m) {
            loglog_slope(&xs, m).ok().map(|(slope, stderr)| SlopeFit { slope, stderr })
        } else {
            None
        }
    };
    let slope_n = fit_slope(&mean_n);
    let slope_q = fit_slope(&mean_q);
    Ok(RateStudyResult {
        grid: cfg.n_grid.clone(),
        reps: cfg.reps,
        cells,
        degenerate: slope_n.is_none() || slope_q.is_none(),
        mean_error_n: mean_n,
        mean_error_q: mean_q,
        slope_n,
        slope_q,
        theoretical_slope: -rate_exponent(cfg.tuning.q, cfg.beta()),
    })
}
