use std::path::Path;

use dpam::simlab::{generate, rate_study, C1Choice, RateStudyConfig, Scenario};
use dpam::tuning::{build_plan_for, rates_for};
use dpam::{build_plan, fit_additive, kkt_residuals, Dataset, ModelDocument, PenaltyPlan};
use ndarray::Array1;
use serde::Serialize;

use crate::config::{self, FitConfig, Manifest, PredictConfig, RatesConfig, ScenarioConfig, TuneConfig};
use crate::table::{to_csv, Table};
use crate::CliError;

/// Writes every artifact only after the run has produced all of them, so that
/// a failed run leaves nothing behind.
fn write_all(out: &Path, files: &[(&str, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    for (name, body) in files {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn require(value: &str, what: &str) -> Result<(), CliError> {
    if value.is_empty() {
        Err(CliError::input(format!("missing {what}")))
    } else {
        Ok(())
    }
}

#[derive(Serialize)]
struct TraceRow {
    sweep: usize,
    objective: f64,
}

#[derive(Serialize)]
struct ComponentRow<'a> {
    index: usize,
    column: &'a str,
    class: String,
    active: bool,
    knots: usize,
    seminorm: f64,
    empnorm: f64,
    lambda: f64,
    rho: f64,
    kkt_gap: f64,
}

pub fn fit(cfg: &FitConfig, out: &Path) -> Result<(), CliError> {
    require(&cfg.data, "data path (--data)")?;
    require(&cfg.response, "response column (--response)")?;
    let table = Table::read(Path::new(&cfg.data))?;
    let ry = table.column_index(&cfg.response)?;
    let cols: Vec<usize> = (0..table.header.len()).filter(|&j| j != ry).collect();
    if cols.is_empty() {
        return Err(CliError::input("no covariate columns besides the response"));
    }
    let names: Vec<String> = cols.iter().map(|&j| table.header[j].clone()).collect();
    let x = table.select(&cols);
    let y = Array1::from(table.column(ry));
    let (data, rescale) = if cfg.rescale {
        let (d, r) = Dataset::rescaled(x, y)?;
        (d, Some(r))
    } else {
        for (i, row) in x.rows().into_iter().enumerate() {
            if let Some(k) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(CliError::input(format!(
                    "line {}, column '{}': value {} outside [0, 1] (use --rescale)",
                    i + 2,
                    names[k],
                    row[k]
                )));
            }
        }
        (Dataset::new(x, y)?, None)
    };
    let data = data.with_column_names(names.clone())?;
    let classes = config::parse_classes(&cfg.classes, data.p())?;
    let plan = match cfg.tuning.manual()? {
        Some((lambda, rho)) => PenaltyPlan::manual(classes, lambda, rho, cfg.tuning.a0)?,
        None => build_plan(&data, &classes, &cfg.tuning.settings()?)?,
    };
    let opts = cfg.solver.options()?;
    let fit = fit_additive(&data, &plan, &opts)?;
    let kkt = kkt_residuals(&fit, &data, &plan)?;

    let trace: Vec<TraceRow> = fit
        .objective_trace
        .iter()
        .enumerate()
        .map(|(sweep, &objective)| TraceRow { sweep, objective })
        .collect();
    let components: Vec<ComponentRow> = (0..data.p())
        .map(|j| {
            let c = fit.components[j].as_ref();
            ComponentRow {
                index: j,
                column: &names[j],
                class: plan.components[j].class.tag(),
                active: c.is_some(),
                knots: c.map_or(0, |c| c.knots.len()),
                seminorm: c.map_or(0.0, |c| c.seminorm_value),
                empnorm: c.map_or(0.0, |c| c.empnorm_value),
                lambda: plan.components[j].lambda,
                rho: plan.components[j].rho,
                kkt_gap: kkt[j],
            }
        })
        .collect();
    let converged = fit.converged;
    let sweeps = fit.sweeps;
    let config_json = serde_json::to_value(cfg).expect("config serializes");
    let doc = ModelDocument::new(fit, names.clone(), table.header[ry].clone(), rescale, kkt, config_json)?;
    write_all(
        out,
        &[
            ("model.json", doc.to_json()),
            ("trace.csv", to_csv(&trace)?),
            ("components.csv", to_csv(&components)?),
            ("manifest.json", Manifest::new("fit", cfg).to_json()),
        ],
    )?;
    if !converged {
        return Err(CliError::solver(format!(
            "no convergence after {sweeps} sweeps; artifacts written with converged = false"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    row: usize,
    prediction: f64,
}

pub fn predict(cfg: &PredictConfig, out: &Path) -> Result<(), CliError> {
    require(&cfg.model, "model path (--model)")?;
    require(&cfg.data, "data path (--data)")?;
    let text = std::fs::read_to_string(&cfg.model)
        .map_err(|e| CliError::input(format!("cannot read model {}: {e}", cfg.model)))?;
    let doc = ModelDocument::from_json(&text)?;
    let table = Table::read(Path::new(&cfg.data))?;
    let cols = doc
        .columns
        .iter()
        .map(|c| {
            table
                .header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| CliError::input(format!("data lacks model column '{c}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let preds = doc.predict(&table.select(&cols))?;
    let rows: Vec<PredictionRow> = preds
        .iter()
        .enumerate()
        .map(|(row, &prediction)| PredictionRow { row, prediction })
        .collect();
    write_all(
        out,
        &[
            ("predictions.csv", to_csv(&rows)?),
            ("manifest.json", Manifest::new("predict", cfg).to_json()),
        ],
    )
}

#[derive(Serialize)]
struct RateRow {
    index: usize,
    class: String,
    beta: f64,
    nu: f64,
    gamma_q: f64,
    w_q: f64,
    gamma_star: f64,
    w_star: f64,
    lambda: f64,
    rho: f64,
}

pub fn tune(cfg: &TuneConfig, out: &Path) -> Result<(), CliError> {
    if cfg.n < 2 {
        return Err(CliError::input("tune needs n >= 2 (--n)"));
    }
    let p = match (cfg.p, cfg.classes.len()) {
        (Some(p), _) => p,
        (None, k) if k > 1 => k,
        _ => return Err(CliError::input("tune needs p (--p) or one class per covariate")),
    };
    let classes = config::parse_classes(&cfg.classes, p)?;
    let settings = cfg.tuning.settings()?;
    let plan = build_plan_for(cfg.n, &classes, &settings)?;
    let rows = classes
        .iter()
        .enumerate()
        .map(|(j, &class)| {
            let r = rates_for(class, &settings, cfg.n, p)?;
            Ok(RateRow {
                index: j,
                class: class.tag(),
                beta: class.beta(),
                nu: r.nu,
                gamma_q: r.gamma_q,
                w_q: r.w_q,
                gamma_star: r.gamma_star,
                w_star: r.w_star,
                lambda: plan.components[j].lambda,
                rho: plan.components[j].rho,
            })
        })
        .collect::<Result<Vec<_>, dpam::Error>>()?;
    let mut plan_json = serde_json::to_string_pretty(&plan).expect("plan serializes");
    plan_json.push('\n');
    write_all(
        out,
        &[
            ("plan.json", plan_json),
            ("rates.csv", to_csv(&rows)?),
            ("manifest.json", Manifest::new("tune", cfg).to_json()),
        ],
    )
}

#[derive(Serialize)]
struct TruthDocument<'a> {
    scenario: &'a Scenario,
    truth: &'a dpam::GroundTruth,
}

pub fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let (data, truth) = generate(&scenario)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(|e| CliError::io(e.to_string()))?;
    for (row, y) in data.x().rows().into_iter().zip(data.y()) {
        let rec: Vec<f64> = row.iter().copied().chain(std::iter::once(*y)).collect();
        w.serialize(rec).map_err(|e| CliError::io(e.to_string()))?;
    }
    let csv_text = String::from_utf8(w.into_inner().map_err(|e| CliError::io(e.to_string()))?).expect("utf-8");
    let mut truth_json = serde_json::to_string_pretty(&TruthDocument {
        scenario: &scenario,
        truth: &truth,
    })
    .expect("truth serializes");
    truth_json.push('\n');
    write_all(
        out,
        &[
            ("data.csv", csv_text),
            ("truth.json", truth_json),
            ("manifest.json", Manifest::new("simulate", cfg).to_json()),
        ],
    )
}

#[derive(Serialize)]
struct CellRow<'a> {
    n: usize,
    rep: usize,
    seed: u64,
    error_n: f64,
    error_q: f64,
    error_q_se: f64,
    sweeps: usize,
    converged: bool,
    active: usize,
    failure: &'a str,
}

#[derive(Serialize)]
struct SummaryRow {
    n: usize,
    log_n: f64,
    mean_error_n: f64,
    log_mean_error_n: f64,
    mean_error_q: f64,
    log_mean_error_q: f64,
    slope_n: f64,
    slope_n_se: f64,
    slope_q: f64,
    slope_q_se: f64,
    theoretical_slope: f64,
    degenerate: bool,
}

pub fn rates(cfg: &RatesConfig, out: &Path) -> Result<(), CliError> {
    let template = ScenarioConfig {
        n: cfg.n_grid.first().copied().unwrap_or(2),
        ..cfg.scenario.clone()
    }
    .scenario()?;
    let tuning = cfg.tuning.settings()?;
    let study = RateStudyConfig {
        template,
        n_grid: cfg.n_grid.clone(),
        reps: cfg.reps,
        classes: config::parse_classes(&cfg.classes, cfg.scenario.p)?,
        tuning,
        c1: match cfg.c1_plugin {
            Some(factor) => C1Choice::Plugin { factor },
            None => C1Choice::Fixed { value: tuning.c1 },
        },
        fit: cfg.solver.options()?,
        n_mc: cfg.n_mc,
        seed: cfg.seed,
    };
    let res = rate_study(&study)?;
    let cells: Vec<CellRow> = res
        .cells
        .iter()
        .map(|c| CellRow {
            n: c.n,
            rep: c.rep,
            seed: c.seed,
            error_n: c.error_n,
            error_q: c.error_q,
            error_q_se: c.error_q_se,
            sweeps: c.sweeps,
            converged: c.converged,
            active: c.active,
            failure: c.failure.as_deref().unwrap_or(""),
        })
        .collect();
    let slope = |s: Option<dpam::simlab::SlopeFit>| s.map_or((f64::NAN, f64::NAN), |s| (s.slope, s.stderr));
    let (sn, sn_se) = slope(res.slope_n);
    let (sq, sq_se) = slope(res.slope_q);
    let summary: Vec<SummaryRow> = res
        .grid
        .iter()
        .enumerate()
        .map(|(i, &n)| SummaryRow {
            n,
            log_n: (n as f64).ln(),
            mean_error_n: res.mean_error_n[i],
            log_mean_error_n: res.mean_error_n[i].ln(),
            mean_error_q: res.mean_error_q[i],
            log_mean_error_q: res.mean_error_q[i].ln(),
            slope_n: sn,
            slope_n_se: sn_se,
            slope_q: sq,
            slope_q_se: sq_se,
            theoretical_slope: res.theoretical_slope,
            degenerate: res.degenerate,
        })
        .collect();
    write_all(
        out,
        &[
            ("cells.csv", to_csv(&cells)?),
            ("summary.csv", to_csv(&summary)?),
            ("manifest.json", Manifest::new("rates", cfg).to_json()),
        ],
    )
}
