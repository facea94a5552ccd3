//! Run configurations. Each subcommand resolves a config document (TOML or a
//! previously written JSON manifest) and then applies command-line overrides.

use std::path::Path;

use dpam::simlab::{AmplitudeSchedule, CovariateDist, NoiseKind, Scenario, Shape};
use dpam::{ComponentClass, FitOptions, SweepOrder, TuningSettings, TuningVariant};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub q: f64,
    pub c1: f64,
    pub a0: f64,
    pub epsilon: f64,
    pub b0star: f64,
    /// `adaptive` or `dependent`.
    pub variant: String,
    pub mf: Option<f64>,
    pub mq: Option<f64>,
    /// Manual penalties; when set they replace the tuned schedule.
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        let d = TuningSettings::default();
        Self {
            q: d.q,
            c1: d.c1,
            a0: d.a0,
            epsilon: d.epsilon,
            b0star: d.b0star,
            variant: "adaptive".into(),
            mf: None,
            mq: None,
            lambda: None,
            rho: None,
        }
    }
}

impl TuningConfig {
    pub fn settings(&self) -> Result<TuningSettings, CliError> {
        let variant = match self.variant.as_str() {
            "adaptive" => TuningVariant::Adaptive,
            "dependent" => match (self.mf, self.mq) {
                (Some(mf), Some(mq)) => TuningVariant::Dependent { mf, mq },
                _ => return Err(CliError::input("variant 'dependent' needs both mf and mq")),
            },
            other => return Err(CliError::input(format!("unknown variant '{other}' (adaptive|dependent)"))),
        };
        Ok(TuningSettings {
            q: self.q,
            c1: self.c1,
            epsilon: self.epsilon,
            a0: self.a0,
            b0star: self.b0star,
            variant,
        })
    }

    /// `Some((lambda, rho))` when penalties are given by hand.
    pub fn manual(&self) -> Result<Option<(f64, f64)>, CliError> {
        match (self.lambda, self.rho) {
            (None, None) => Ok(None),
            (Some(l), r) => Ok(Some((l, r.unwrap_or(0.0)))),
            (None, Some(_)) => Err(CliError::input("rho given without lambda")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub kkt_tol: f64,
    pub active_set: bool,
    /// Shuffles the sweep order with this seed; cyclic when absent.
    pub seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = FitOptions::default();
        Self {
            tol: d.tol,
            max_sweeps: d.max_sweeps,
            kkt_tol: d.kkt_tol,
            active_set: d.active_set,
            seed: None,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> Result<FitOptions, CliError> {
        let opts = FitOptions {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            active_set: self.active_set,
            kkt_tol: self.kkt_tol,
            order: match self.seed {
                Some(seed) => SweepOrder::Shuffled { seed },
                None => SweepOrder::Cyclic,
            },
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: String,
    /// Column name, or a zero-based index when no column has that name.
    pub response: String,
    /// One class tag for every covariate, or one per covariate.
    pub classes: Vec<String>,
    pub rescale: bool,
    pub tuning: TuningConfig,
    pub solver: SolverConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: String::new(),
            response: String::new(),
            classes: vec!["bv1".into()],
            rescale: false,
            tuning: TuningConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub model: String,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub n: usize,
    /// Number of covariates; inferred from `classes` when it has several entries.
    pub p: Option<usize>,
    pub classes: Vec<String>,
    pub tuning: TuningConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            n: 0,
            p: None,
            classes: vec!["bv1".into()],
            tuning: TuningConfig::default(),
        }
    }
}

/// Synthetic scenario in flat form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    /// Components `0..m0` are active.
    pub m0: usize,
    /// `step:J`, `linear:B` or `sine:F`.
    pub shape: String,
    pub amplitude: f64,
    /// When set, amplitudes decay as `amplitude * i^(-1.01 / decay_q)`.
    pub decay_q: Option<f64>,
    pub noise_sd: f64,
    /// `gaussian` or `uniform`.
    pub noise: String,
    /// Slope of a tilted covariate density; uniform when zero.
    pub tilt: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 200,
            p: 10,
            m0: 3,
            shape: "step:2".into(),
            amplitude: 1.0,
            decay_q: None,
            noise_sd: 1.0,
            noise: "gaussian".into(),
            tilt: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        if self.m0 > self.p {
            return Err(CliError::input(format!("m0 = {} exceeds p = {}", self.m0, self.p)));
        }
        let shape = parse_shape(&self.shape)?;
        let noise = match self.noise.as_str() {
            "gaussian" => NoiseKind::Gaussian,
            "uniform" => NoiseKind::BoundedUniform,
            other => return Err(CliError::input(format!("unknown noise '{other}' (gaussian|uniform)"))),
        };
        let amplitudes = match self.decay_q {
            None => AmplitudeSchedule::Constant { value: self.amplitude },
            Some(q) => AmplitudeSchedule::Decaying {
                q,
                scale: self.amplitude,
            },
        };
        let scenario = Scenario {
            n: self.n,
            p: self.p,
            active: (0..self.m0).collect(),
            shapes: vec![shape; self.m0],
            amplitudes,
            noise_sd: self.noise_sd,
            noise,
            covariates: if self.tilt == 0.0 {
                CovariateDist::Uniform
            } else {
                CovariateDist::Tilted { slope: self.tilt }
            },
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub n_mc: usize,
    /// Scenario template; its `n` and `seed` are replaced per cell.
    pub scenario: ScenarioConfig,
    pub classes: Vec<String>,
    pub tuning: TuningConfig,
    /// When set, `c1` in each cell is this factor times the plug-in noise scale.
    pub c1_plugin: Option<f64>,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![128, 256, 512, 1024, 2048],
            reps: 20,
            n_mc: 20_000,
            scenario: ScenarioConfig::default(),
            classes: vec!["bv1".into()],
            tuning: TuningConfig::default(),
            c1_plugin: None,
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

pub fn parse_shape(s: &str) -> Result<Shape, CliError> {
    let bad = || CliError::input(format!("bad shape '{s}' (expected step:J, linear:B or sine:F)"));
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "step" => Ok(Shape::Step {
            jumps: arg.parse().map_err(|_| bad())?,
        }),
        "linear" => Ok(Shape::PiecewiseLinear {
            bends: arg.parse().map_err(|_| bad())?,
        }),
        "sine" => Ok(Shape::Sine {
            freq: arg.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

/// Expands class tags to `p` classes.
pub fn parse_classes(tags: &[String], p: usize) -> Result<Vec<ComponentClass>, CliError> {
    let classes = tags
        .iter()
        .map(|t| t.parse::<ComponentClass>().map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    match classes.len() {
        1 => Ok(vec![classes[0]; p]),
        k if k == p => Ok(classes),
        k => Err(CliError::input(format!("got {k} classes for {p} covariates"))),
    }
}

/// The manifest written next to every run's artifacts. Feeding it back through
/// `--config` reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest<C> {
    pub command: String,
    pub version: String,
    pub config: C,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &str, config: C) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Loads a config document: a JSON manifest of the same command, or TOML.
pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<C, CliError> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| CliError::input(format!("config {}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest<C> = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        if m.command != command {
            return Err(CliError::input(format!(
                "manifest {} is for '{}', not '{command}'",
                path.display(),
                m.command
            )));
        }
        Ok(m.config)
    } else {
        toml::from_str(&text).map_err(|e| bad(&e))
    }
}
