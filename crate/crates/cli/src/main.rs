//! `dpam`: fit, predict, tune, simulate and rate-study commands.
//!
//! Exit status is 0 on success, 2 on invalid input or configuration and 3 when
//! the solver fails.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{SolverConfig, TuningConfig};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self::input(msg)
    }
}

impl From<dpam::Error> for CliError {
    fn from(e: dpam::Error) -> Self {
        match e {
            dpam::Error::SolverFailure(_) => Self::solver(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "dpam", version, about = "Doubly penalized sparse additive regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an additive model to a delimited table.
    Fit(FitArgs),
    /// Predict from a saved model document.
    Predict(PredictArgs),
    /// Compute the tuned penalty plan for a problem size.
    Tune(TuneArgs),
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run a rate study over a grid of sample sizes.
    Rates(RatesArgs),
}

#[derive(Args, Default)]
struct TuningFlags {
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    b0star: Option<f64>,
    /// adaptive or dependent
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    mf: Option<f64>,
    #[arg(long)]
    mq: Option<f64>,
}

impl TuningFlags {
    fn apply(&self, t: &mut TuningConfig) {
        set(&mut t.q, self.q);
        set(&mut t.c1, self.c1);
        set(&mut t.a0, self.a0);
        set(&mut t.epsilon, self.epsilon);
        set(&mut t.b0star, self.b0star);
        set(&mut t.variant, self.variant.clone());
        if self.mf.is_some() {
            t.mf = self.mf;
        }
        if self.mq.is_some() {
            t.mq = self.mq;
        }
    }
}

#[derive(Args, Default)]
struct SolverFlags {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    kkt_tol: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, s: &mut SolverConfig) {
        set(&mut s.tol, self.tol);
        set(&mut s.max_sweeps, self.max_sweeps);
        set(&mut s.kkt_tol, self.kkt_tol);
    }
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

#[derive(Args)]
struct FitArgs {
    /// TOML config, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// Response column name or zero-based index.
    #[arg(long)]
    response: Option<String>,
    /// Comma-separated class tags (bv1, bv2, sob2, ...), one for all or one per covariate.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Min-max rescale covariates onto [0, 1].
    #[arg(long)]
    rescale: bool,
    #[command(flatten)]
    tuning: TuningFlags,
    /// Manual empirical-norm penalty, replacing the tuned schedule.
    #[arg(long)]
    lambda: Option<f64>,
    /// Manual smoothness penalty (with --lambda).
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Seed for a shuffled sweep order.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model document written by `fit`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    #[command(flatten)]
    tuning: TuningFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct ScenarioFlags {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    /// step:J, linear:B or sine:F
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    decay_q: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// gaussian or uniform
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    tilt: Option<f64>,
}

impl ScenarioFlags {
    fn apply(&self, s: &mut config::ScenarioConfig) {
        set(&mut s.p, self.p);
        set(&mut s.m0, self.m0);
        set(&mut s.shape, self.shape.clone());
        set(&mut s.amplitude, self.amplitude);
        if self.decay_q.is_some() {
            s.decay_q = self.decay_q;
        }
        set(&mut s.noise_sd, self.noise_sd);
        set(&mut s.noise, self.noise.clone());
        set(&mut s.tilt, self.tilt);
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n_mc: Option<usize>,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    #[command(flatten)]
    tuning: TuningFlags,
    /// Set c1 per cell to this factor times the plug-in noise scale.
    #[arg(long)]
    c1_plugin: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => {
            let mut cfg: config::FitConfig = config::load(a.config.as_deref(), "fit")?;
            set(&mut cfg.data, a.data);
            set(&mut cfg.response, a.response);
            set(&mut cfg.classes, a.classes);
            cfg.rescale |= a.rescale;
            a.tuning.apply(&mut cfg.tuning);
            if a.lambda.is_some() {
                cfg.tuning.lambda = a.lambda;
            }
            if a.rho.is_some() {
                cfg.tuning.rho = a.rho;
            }
            a.solver.apply(&mut cfg.solver);
            if a.seed.is_some() {
                cfg.solver.seed = a.seed;
            }
            commands::fit(&cfg, &a.out)
        }
        Command::Predict(a) => {
            let mut cfg: config::PredictConfig = config::load(a.config.as_deref(), "predict")?;
            set(&mut cfg.model, a.model);
            set(&mut cfg.data, a.data);
            commands::predict(&cfg, &a.out)
        }
        Command::Tune(a) => {
            let mut cfg: config::TuneConfig = config::load(a.config.as_deref(), "tune")?;
            set(&mut cfg.n, a.n);
            if a.p.is_some() {
                cfg.p = a.p;
            }
            set(&mut cfg.classes, a.classes);
            a.tuning.apply(&mut cfg.tuning);
            commands::tune(&cfg, &a.out)
        }
        Command::Simulate(a) => {
            let mut cfg: config::ScenarioConfig = config::load(a.config.as_deref(), "simulate")?;
            set(&mut cfg.n, a.n);
            a.scenario.apply(&mut cfg);
            set(&mut cfg.seed, a.seed);
            commands::simulate(&cfg, &a.out)
        }
        Command::Rates(a) => {
            let mut cfg: config::RatesConfig = config::load(a.config.as_deref(), "rates")?;
            set(&mut cfg.n_grid, a.n_grid);
            set(&mut cfg.reps, a.reps);
            set(&mut cfg.n_mc, a.n_mc);
            a.scenario.apply(&mut cfg.scenario);
            set(&mut cfg.classes, a.classes);
            a.tuning.apply(&mut cfg.tuning);
            if a.c1_plugin.is_some() {
                cfg.c1_plugin = a.c1_plugin;
            }
            a.solver.apply(&mut cfg.solver);
            set(&mut cfg.seed, a.seed);
            commands::rates(&cfg, &a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpam: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
