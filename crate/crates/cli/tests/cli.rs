use std::path::Path;
use std::process::{Command, Output};

fn dpam(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpam"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run dpam")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

/// Writes a small table with covariates `u`, `v` on `[lo, hi]` and response `y`.
fn write_table(dir: &Path, name: &str, lo: f64, hi: f64) -> Vec<f64> {
    let mut s = String::from("u,v,y\n");
    let mut ys = Vec::new();
    for i in 0..40 {
        let a = lo + (hi - lo) * ((i * 7 % 40) as f64 / 39.0);
        let b = lo + (hi - lo) * ((i * 13 % 40) as f64 / 39.0);
        let y = if a > 0.5 * (lo + hi) { 1.0 } else { -1.0 } + 0.1 * ((i as f64) * 1.7).sin();
        ys.push(y);
        s.push_str(&format!("{a},{b},{y}\n"));
    }
    std::fs::write(dir.join(name), s).unwrap();
    ys
}

#[test]
fn missing_response_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    write_table(tmp.path(), "d.csv", 0.0, 1.0);
    let o = dpam(&["fit", "--data", "d.csv", "--response", "z", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("'z'"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn out_of_range_covariate_names_the_column() {
    let tmp = tempfile::tempdir().unwrap();
    write_table(tmp.path(), "d.csv", -2.0, 5.0);
    let o = dpam(&["fit", "--data", "d.csv", "--response", "y", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("column 'u'"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());

    std::fs::write(tmp.path().join("bad.csv"), "u,y\n0.5,1\n0.2,nan\n").unwrap();
    let o = dpam(&["fit", "--data", "bad.csv", "--response", "y", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3, column 'y'"), "{}", stderr(&o));
}

#[test]
fn huge_lambda_gives_intercept_only() {
    let tmp = tempfile::tempdir().unwrap();
    let ys = write_table(tmp.path(), "d.csv", 0.0, 1.0);
    let args = ["fit", "--data", "d.csv", "--response", "y", "--lambda", "1e6", "--rho", "0.1", "--out", "out"];
    let o = dpam(&args, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/model.json")).unwrap()).unwrap();
    let comps = doc["fit"]["components"].as_array().unwrap();
    assert!(comps.iter().all(|c| c.is_null()));
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    assert_eq!(doc["fit"]["intercept"].as_f64().unwrap(), mean);
    let (header, rows) = read_rows(&tmp.path().join("out/components.csv"));
    let active = header.iter().position(|h| h == "active").unwrap();
    assert!(rows.iter().all(|r| r[active] == "false"));
}

#[test]
fn rescaled_fit_predicts_on_raw_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    write_table(tmp.path(), "d.csv", -2.0, 5.0);
    let fit = dpam(
        &["fit", "--data", "d.csv", "--response", "y", "--rescale", "--classes", "bv1,sob2", "--c1", "0.2", "--out", "f"],
        tmp.path(),
    );
    assert_eq!(code(&fit), 0, "{}", stderr(&fit));
    let pred = dpam(&["predict", "--model", "f/model.json", "--data", "d.csv", "--out", "p"], tmp.path());
    assert_eq!(code(&pred), 0, "{}", stderr(&pred));

    let text = std::fs::read_to_string(tmp.path().join("f/model.json")).unwrap();
    let doc = dpam::ModelDocument::from_json(&text).unwrap();
    let (_, rows) = read_rows(&tmp.path().join("d.csv"));
    let x = ndarray::Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j].parse::<f64>().unwrap());
    let expected = doc.predict(&x).unwrap();
    let (_, preds) = read_rows(&tmp.path().join("p/predictions.csv"));
    for (r, e) in preds.iter().zip(&expected) {
        assert!((r[1].parse::<f64>().unwrap() - e).abs() <= 1e-10);
    }
    assert_eq!(doc.rescale.as_ref().unwrap()[0], (-2.0, 5.0));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_table(tmp.path(), "d.csv", 0.0, 1.0);
    std::fs::write(tmp.path().join("c.toml"), "data = \"d.csv\"\nresponse = \"y\"\nlamda = 0.1\n").unwrap();
    let o = dpam(&["fit", "--config", "c.toml", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));

    std::fs::write(tmp.path().join("c.toml"), "data = \"d.csv\"\nresponse = \"y\"\n[tuning]\nc1 = 0.5\n").unwrap();
    let o = dpam(&["fit", "--config", "c.toml", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"c1\": 0.5"));
}

#[test]
fn rates_need_three_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dpam(&["rates", "--n-grid", "128", "--reps", "3", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn rates_summary_reports_the_predicted_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "rates", "--n-grid", "32,64,128", "--reps", "3", "--n-mc", "200", "--p", "3", "--m0", "1", "--classes", "bv1",
        "--out", "r",
    ];
    let o = dpam(&args, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_rows(&tmp.path().join("r/summary.csv"));
    let col = header.iter().position(|h| h == "theoretical_slope").unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!((r[col].parse::<f64>().unwrap() + 2.0 / 3.0).abs() <= 1e-12);
    }
    for name in ["log_n", "log_mean_error_n", "log_mean_error_q", "slope_q"] {
        assert!(header.iter().any(|h| h == name), "missing {name}");
    }
    let (_, cells) = read_rows(&tmp.path().join("r/cells.csv"));
    assert_eq!(cells.len(), 9);
}

#[test]
fn tune_writes_a_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dpam(&["tune", "--n", "1000", "--p", "10", "--classes", "bv1", "--out", "t"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan: dpam::PenaltyPlan =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("t/plan.json")).unwrap()).unwrap();
    assert_eq!(plan.p(), 10);
    assert_eq!(plan.consistency_error().unwrap_or(0.0), 0.0);

    // a smoothness weight above 1 is refused
    let o = dpam(&["tune", "--n", "3", "--p", "1000", "--classes", "bv1", "--out", "t2"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&dpam(&["fit"], tmp.path())), 2);
    assert_eq!(code(&dpam(&["frobnicate"], tmp.path())), 2);
    assert_eq!(code(&dpam(&["fit", "--data", "nope.csv", "--response", "y", "--out", "o"], tmp.path())), 2);
}
