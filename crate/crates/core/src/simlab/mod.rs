//! Synthetic additive data and empirical checks of error decay rates.

mod quad;
mod study;
mod truth;

pub use study::{cell_seed, rate_study, C1Choice, RateCell, RateStudyConfig, RateStudyResult, SlopeFit};
pub use truth::{CovariateDist, GroundTruth, Shape, TruthComponent};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::model::{evaluate_component, AdditiveFit, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on `[-sd sqrt(3), sd sqrt(3)]`.
    BoundedUniform,
}

/// Sizes of the active components' `Q`-norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeSchedule {
    Constant { value: f64 },
    /// `scale * i^(-1.01 / q)` for the `i`-th active component (1-based), so
    /// that `sum_i ||g_i||_Q^q` stays bounded as more components are added.
    Decaying { q: f64, scale: f64 },
}

impl AmplitudeSchedule {
    pub fn amplitude(&self, i: usize) -> Result<f64> {
        match *self {
            AmplitudeSchedule::Constant { value } => Ok(value),
            AmplitudeSchedule::Decaying { q, scale } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(format!("decaying amplitudes need q in (0, 1], got {q}")));
                }
                Ok(scale * ((i + 1) as f64).powf(-1.01 / q))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    /// Zero-based indices of the nonzero components.
    pub active: Vec<usize>,
    /// One shape per active component, in the order of `active`.
    pub shapes: Vec<Shape>,
    pub amplitudes: AmplitudeSchedule,
    pub noise_sd: f64,
    pub noise: NoiseKind,
    pub covariates: CovariateDist,
    pub seed: u64,
}

impl Scenario {
    /// `active` components `0..m0`, all with the same shape and `Q`-norm 1.
    pub fn sparse(n: usize, p: usize, m0: usize, shape: Shape, noise_sd: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            active: (0..m0).collect(),
            shapes: vec![shape; m0],
            amplitudes: AmplitudeSchedule::Constant { value: 1.0 },
            noise_sd,
            noise: NoiseKind::Gaussian,
            covariates: CovariateDist::Uniform,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(invalid(format!("scenario needs n >= 2 and p >= 1, got n={} p={}", self.n, self.p)));
        }
        ensure_len("scenario shapes", self.active.len(), self.shapes.len())?;
        let mut seen = vec![false; self.p];
        for &j in &self.active {
            if j >= self.p {
                return Err(invalid(format!("active index {j} out of range for p={}", self.p)));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(invalid(format!("active index {j} repeated")));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(invalid(format!("noise_sd must be finite and nonnegative, got {}", self.noise_sd)));
        }
        self.covariates.validate()
    }

    pub fn truth(&self) -> Result<GroundTruth> {
        self.validate()?;
        let mut components = vec![None; self.p];
        for (i, (&j, shape)) in self.active.iter().zip(&self.shapes).enumerate() {
            let amp = self.amplitudes.amplitude(i)?;
            components[j] = Some(TruthComponent::new(shape, j, amp, self.covariates)?);
        }
        Ok(GroundTruth { components })
    }
}

/// Draws a dataset from the scenario. Pure function of the scenario.
pub fn generate(scenario: &Scenario) -> Result<(Dataset, GroundTruth)> {
    let truth = scenario.truth()?;
    let (n, p) = (scenario.n, scenario.p);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            x[[i, j]] = scenario.covariates.quantile(rng.random::<f64>());
        }
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let half_width = 3f64.sqrt();
    let y: Array1<f64> = (0..n)
        .map(|i| {
            let row = x.row(i);
            let signal = truth.eval_row(row.as_slice().expect("row-major design"));
            let e = match scenario.noise {
                NoiseKind::Gaussian => normal.sample(&mut rng),
                NoiseKind::BoundedUniform => half_width * (2.0 * rng.random::<f64>() - 1.0),
            };
            signal + scenario.noise_sd * e
        })
        .collect();
    Ok((Dataset::new(x, y)?, truth))
}

/// Anything that maps a covariate row to a prediction.
pub trait Predictor {
    fn p(&self) -> usize;
    fn predict_row(&self, x: &[f64]) -> f64;
}

impl Predictor for AdditiveFit {
    fn p(&self) -> usize {
        self.components.len()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut s = self.intercept;
        for (c, &v) in self.components.iter().zip(x) {
            if let Some(c) = c {
                s += evaluate_component(c, v);
            }
        }
        s
    }
}

impl Predictor for GroundTruth {
    fn p(&self) -> usize {
        self.components.len()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.eval_row(x)
    }
}

/// `f + offset`.
pub struct Shifted<'a, P: Predictor>(pub &'a P, pub f64);

impl<P: Predictor> Predictor for Shifted<'_, P> {
    fn p(&self) -> usize {
        self.0.p()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.0.predict_row(x) + self.1
    }
}

/// `||f - g*||_n^2` over the design points of `data`.
pub fn error_n<P: Predictor, T: Predictor>(fit: &P, truth: &T, data: &Dataset) -> Result<f64> {
    ensure_len("fit dimension", data.p(), fit.p())?;
    ensure_len("truth dimension", data.p(), truth.p())?;
    let x = data.x();
    let mut s = 0.0;
    for row in x.rows() {
        let r = row.as_slice().expect("row-major design");
        let d = fit.predict_row(r) - truth.predict_row(r);
        s += d * d;
    }
    Ok(s / data.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `||f - g*||_Q^2` from `n_mc` fresh covariate draws.
pub fn error_q_mc<P: Predictor, T: Predictor>(
    fit: &P,
    truth: &T,
    dist: CovariateDist,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc == 0 {
        return Err(invalid("n_mc must be at least 1"));
    }
    ensure_len("truth dimension", fit.p(), truth.p())?;
    dist.validate()?;
    let p = fit.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row = vec![0.0; p];
    // Welford running moments
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n_mc {
        row.iter_mut().for_each(|v| *v = dist.quantile(rng.random::<f64>()));
        let d = fit.predict_row(&row) - truth.predict_row(&row);
        let e = d * d;
        let delta = e - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (e - mean);
    }
    let k = n_mc as f64;
    let var = if n_mc > 1 { m2 / (k - 1.0) } else { f64::NAN };
    Ok(McEstimate {
        mean,
        stderr: (var / k).sqrt(),
    })
}

/// `||f - g*||_Q^2` by quadrature, using independence of the coordinates:
/// the difference is `a + sum_j h_j(x_j)`, so its second moment is
/// `(a + sum_j E h_j)^2 + sum_j Var h_j`.
pub fn error_q_quadrature(fit: &AdditiveFit, truth: &GroundTruth, dist: CovariateDist) -> Result<f64> {
    ensure_len("truth dimension", fit.p(), truth.p())?;
    dist.validate()?;
    let mut mean = fit.intercept;
    let mut var = 0.0;
    for (f, g) in fit.components.iter().zip(&truth.components) {
        if f.is_none() && g.is_none() {
            continue;
        }
        let mut br = Vec::new();
        if let Some(f) = f {
            br.extend_from_slice(&f.knots);
        }
        if let Some(g) = g {
            br.extend(g.breaks());
        }
        let h = |x: f64| f.as_ref().map_or(0.0, |f| evaluate_component(f, x)) - g.as_ref().map_or(0.0, |g| g.eval(x));
        let m1 = dist.expect(h, &br);
        let m2 = dist.expect(|x| h(x).powi(2), &br);
        mean += m1;
        var += (m2 - m1 * m1).max(0.0);
    }
    Ok(mean * mean + var)
}

/// Least-squares slope of `log y` on `log x` with its standard error
/// (`NaN` with only two points).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    ensure_len("slope ordinates", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(invalid("slope needs at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("log-log slope needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("slope needs at least two distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let stderr = if lx.len() > 2 {
        let ssr: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| {
                let e = y - my - slope * (x - mx);
                e * e
            })
            .sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((slope, stderr))
}
