use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::quad::integrate;
use crate::error::{invalid, Result};
use crate::model::{ClassKind, ComponentClass};

const PANEL: f64 = 1.0 / 512.0;

/// Shape of one true component before centering and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Right-continuous step with `jumps` equally spaced jumps.
    Step { jumps: usize },
    /// Continuous piecewise linear with `bends` equally spaced bends.
    PiecewiseLinear { bends: usize },
    /// `sin(2 pi freq x + phase)`, the phase depending on the component index.
    Sine { freq: f64 },
    /// Linear interpolation of a table, flat outside its range.
    Table { knots: Vec<f64>, values: Vec<f64> },
}

/// Covariate law on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateDist {
    Uniform,
    /// Density `1 + slope (x - 1/2)`, bounded below by `1 - |slope|/2`.
    Tilted { slope: f64 },
}

impl CovariateDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovariateDist::Uniform => Ok(()),
            CovariateDist::Tilted { slope } if slope.abs() < 2.0 => Ok(()),
            CovariateDist::Tilted { slope } => Err(invalid(format!("tilted density needs |slope| < 2, got {slope}"))),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            CovariateDist::Uniform => 1.0,
            CovariateDist::Tilted { slope } => 1.0 + slope * (x - 0.5),
        }
    }

    /// Inverse distribution function.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            CovariateDist::Uniform => u,
            CovariateDist::Tilted { slope: a } => {
                if a == 0.0 {
                    return u;
                }
                // F(x) = (1 - a/2) x + a x^2 / 2
                let b = 1.0 - 0.5 * a;
                let disc = (b * b + 2.0 * a * u).max(0.0);
                (2.0 * u / (b + disc.sqrt())).clamp(0.0, 1.0)
            }
        }
    }

    /// `E f(X)` by quadrature.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> f64 {
        integrate(|x| f(x) * self.density(x), breaks, PANEL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Profile {
    Step { breaks: Vec<f64>, levels: Vec<f64> },
    Linear { xs: Vec<f64>, vs: Vec<f64> },
    Sine { omega: f64, phase: f64 },
}

fn level(j: usize, i: usize) -> f64 {
    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * (1.0 + 0.5 * ((j + i) as f64).sin())
}

impl Profile {
    fn new(shape: &Shape, j: usize) -> Result<Self> {
        Ok(match shape {
            Shape::Step { jumps } => {
                if *jumps == 0 {
                    return Err(invalid("a step truth needs at least one jump"));
                }
                let k = *jumps;
                Profile::Step {
                    breaks: (1..=k).map(|i| i as f64 / (k + 1) as f64).collect(),
                    levels: (0..=k).map(|i| level(j, i)).collect(),
                }
            }
            Shape::PiecewiseLinear { bends } => {
                let k = *bends;
                if k == 0 {
                    return Err(invalid("a piecewise linear truth needs at least one bend"));
                }
                Profile::Linear {
                    xs: (0..=k + 1).map(|i| i as f64 / (k + 1) as f64).collect(),
                    vs: (0..=k + 1).map(|i| level(j, i)).collect(),
                }
            }
            Shape::Sine { freq } => {
                if !(*freq > 0.0 && freq.is_finite()) {
                    return Err(invalid(format!("sine frequency must be positive, got {freq}")));
                }
                Profile::Sine {
                    omega: 2.0 * PI * freq,
                    phase: j as f64,
                }
            }
            Shape::Table { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return Err(invalid("table truth needs matching, nonempty knots and values"));
                }
                if knots.windows(2).any(|w| w[0] >= w[1]) || knots[0] < 0.0 || knots[knots.len() - 1] > 1.0 {
                    return Err(invalid("table knots must be strictly increasing in [0, 1]"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("table values must be finite"));
                }
                let mut xs = knots.clone();
                let mut vs = values.clone();
                if xs[0] > 0.0 {
                    xs.insert(0, 0.0);
                    vs.insert(0, values[0]);
                }
                if xs[xs.len() - 1] < 1.0 {
                    xs.push(1.0);
                    vs.push(values[values.len() - 1]);
                }
                Profile::Linear { xs, vs }
            }
        })
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Step { breaks, levels } => levels[breaks.partition_point(|&b| b <= x)],
            Profile::Linear { xs, vs } => {
                if x <= xs[0] {
                    return vs[0];
                }
                let k = xs.len();
                if x >= xs[k - 1] {
                    return vs[k - 1];
                }
                let i = xs.partition_point(|&s| s <= x) - 1;
                let u = (x - xs[i]) / (xs[i + 1] - xs[i]);
                vs[i] + u * (vs[i + 1] - vs[i])
            }
            Profile::Sine { omega, phase } => (omega * x + phase).sin(),
        }
    }

    fn breaks(&self) -> Vec<f64> {
        match self {
            Profile::Step { breaks, .. } => breaks.clone(),
            Profile::Linear { xs, .. } => xs.clone(),
            Profile::Sine { .. } => Vec::new(),
        }
    }

    /// Seminorm of the raw profile (before scaling); `inf` outside the class.
    fn seminorm(&self, class: ComponentClass) -> f64 {
        let m = class.m as usize;
        match (self, class.kind) {
            (Profile::Step { levels, .. }, ClassKind::BoundedVariation) if m == 1 => {
                levels.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
            }
            (Profile::Step { .. }, _) => f64::INFINITY,
            (Profile::Linear { xs, vs }, kind) => {
                let slopes: Vec<f64> = (0..xs.len() - 1).map(|i| (vs[i + 1] - vs[i]) / (xs[i + 1] - xs[i])).collect();
                match (kind, m) {
                    (ClassKind::BoundedVariation, 1) => vs.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
                    (ClassKind::BoundedVariation, 2) => slopes.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
                    (ClassKind::SobolevL2, 1) => slopes
                        .iter()
                        .zip(xs.windows(2))
                        .map(|(s, w)| s * s * (w[1] - w[0]))
                        .sum::<f64>()
                        .sqrt(),
                    _ => {
                        let kinks = slopes.windows(2).any(|w| w[0] != w[1]);
                        if kinks {
                            f64::INFINITY
                        } else {
                            0.0
                        }
                    }
                }
            }
            (Profile::Sine { omega, phase }, ClassKind::BoundedVariation) => {
                // (m-1)-th derivative is omega^(m-1) sin(omega x + phase + (m-1) pi/2)
                let psi = phase + (m - 1) as f64 * PI / 2.0;
                omega.powi(m as i32 - 1) * sine_tv(*omega, psi)
            }
            (Profile::Sine { omega, phase }, ClassKind::SobolevL2) => {
                let psi = phase + m as f64 * PI / 2.0;
                let sq = 0.5 - ((2.0 * (omega + psi)).sin() - (2.0 * psi).sin()) / (4.0 * omega);
                omega.powi(m as i32) * sq.sqrt()
            }
        }
    }
}

/// Total variation of `sin(omega x + psi)` on `[0, 1]`.
fn sine_tv(omega: f64, psi: f64) -> f64 {
    let mut pts = vec![0.0];
    // extrema where omega x + psi = pi/2 + k pi
    let k0 = ((psi - PI / 2.0) / PI).ceil() as i64;
    let mut k = k0;
    loop {
        let x = (PI / 2.0 + k as f64 * PI - psi) / omega;
        if x >= 1.0 {
            break;
        }
        if x > 0.0 {
            pts.push(x);
        }
        k += 1;
    }
    pts.push(1.0);
    pts.windows(2)
        .map(|w| ((omega * w[1] + psi).sin() - (omega * w[0] + psi).sin()).abs())
        .sum()
}

/// One true component `scale (profile(x) - center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComponent {
    pub shape: Shape,
    profile: Profile,
    pub center: f64,
    pub scale: f64,
    /// `||g||_Q`, equal to the requested amplitude.
    pub q_norm: f64,
}

impl TruthComponent {
    /// Centers the shape under `dist` and scales it to `||g||_Q = amplitude`.
    pub fn new(shape: &Shape, index: usize, amplitude: f64, dist: CovariateDist) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(invalid(format!("amplitude must be finite and nonnegative, got {amplitude}")));
        }
        let profile = Profile::new(shape, index)?;
        let br = profile.breaks();
        let center = dist.expect(|x| profile.eval(x), &br);
        let var = dist.expect(|x| (profile.eval(x) - center).powi(2), &br);
        if !(var > 1e-12) {
            return Err(invalid("truth shape is constant under the covariate law"));
        }
        Ok(Self {
            shape: shape.clone(),
            profile,
            center,
            scale: amplitude / var.sqrt(),
            q_norm: amplitude,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.scale * (self.profile.eval(x) - self.center)
    }

    pub fn breaks(&self) -> Vec<f64> {
        self.profile.breaks()
    }

    /// Seminorm of the component in `class`; `inf` when it is not a member.
    pub fn seminorm(&self, class: ComponentClass) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.scale * self.profile.seminorm(class)
    }
}

/// Additive truth `g*(x) = sum_j g*_j(x_j)`, no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub components: Vec<Option<TruthComponent>>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn eval_row(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(x)
            .filter_map(|(c, &v)| c.as_ref().map(|c| c.eval(v)))
            .sum()
    }

    /// `sum_j ||g*_j||_F` in `class`.
    pub fn mf(&self, class: ComponentClass) -> f64 {
        self.components.iter().flatten().map(|c| c.seminorm(class)).sum()
    }

    /// `sum_j ||g*_j||_Q^q`; the number of nonzero components when `q = 0`.
    pub fn mq(&self, q: f64) -> f64 {
        self.components
            .iter()
            .flatten()
            .filter(|c| c.q_norm > 0.0)
            .map(|c| if q == 0.0 { 1.0 } else { c.q_norm.powf(q) })
            .sum()
    }
}
