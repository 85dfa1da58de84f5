use std::path::Path;
use std::process::{Command, Output};

use grp_core::sim::{gen_glm_response, gen_toeplitz_design, Misspec};
use grp_core::GlmFamily;
use serde_json::Value;

fn grp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grp"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("run grp")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_csv(path: &Path, family: GlmFamily, beta: &[f64], n: usize, seed: u64) {
    let p = beta.len();
    let x = gen_toeplitz_design(n, p, 0.5, seed).unwrap();
    let y = gen_glm_response(x.view(), family, beta, &Misspec::None, 0.0, seed + 1).unwrap();
    let mut text = (1..=p).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    text.push_str(",y\n");
    for (row, yi) in x.rows().into_iter().zip(y.iter()) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{},{yi}\n", vals.join(",")));
    }
    std::fs::write(path, text).unwrap();
}

fn logistic_csv(dir: &Path, seed: u64) -> String {
    let path = dir.join(format!("d{seed}.csv"));
    let mut beta = vec![0.0; 15];
    beta[..3].copy_from_slice(&[1.0, -1.0, 1.0]);
    write_csv(&path, GlmFamily::Logistic, &beta, 200, seed);
    path.to_str().unwrap().to_string()
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

fn sorted(list: &[&str]) -> Vec<String> {
    let mut k: Vec<String> = list.iter().map(|s| s.to_string()).collect();
    k.sort();
    k
}

const HEADER_KEYS: [&str; 7] = ["schema_version", "command", "family", "n", "p", "seed", "intercept"];

#[test]
fn gof_schema_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 1);
    let out = grp(&["gof", "-i", &input, "--num-trees", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let mut expected = HEADER_KEYS.to_vec();
    expected.extend([
        "statistic",
        "p_value",
        "degenerate",
        "two_sided",
        "predictor",
        "exact_orthogonalization",
        "direction_sup_norm",
        "kkt_near_ortho",
        "exempt_ortho",
        "lambda_main",
        "lambda_aux",
        "lambda_sq",
        "support_main",
        "support_main_names",
        "n_main",
        "n_aux",
    ]);
    assert_eq!(keys(&v), sorted(&expected));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["degenerate"], false);
    let p = v["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(v["n_main"].as_u64().unwrap() + v["n_aux"].as_u64().unwrap(), 200);
    // support indices are 1-based
    assert!(v["support_main"].as_array().unwrap().iter().all(|j| j.as_u64().unwrap() >= 1));
}

#[test]
fn gof_zero_predictor_exits_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 2);
    let out = grp(&["gof", "-i", &input, "--predictor", "zero"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["degenerate"], true);
    assert!(v["p_value"].is_null());
}

#[test]
fn gof_two_sided_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 3);
    let target = dir.path().join("res.json");
    let out = grp(&[
        "gof",
        "-i",
        &input,
        "--num-trees",
        "30",
        "--two-sided",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["two_sided"], true);
    let t = v["statistic"].as_f64().unwrap();
    let p = v["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(p >= 0.5, t.abs() <= 0.6745, "t = {t}, p = {p}");
}

#[test]
fn group_single_draw() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 4);
    let out = grp(&["group", "-i", &input, "--group", "4..15", "--B", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let p = v["p_value"].as_f64().unwrap();
    assert!(p == 0.5 || p == 1.0, "{p}");
    let mut expected = HEADER_KEYS.to_vec();
    expected.extend([
        "group",
        "statistic",
        "p_value",
        "degenerate",
        "per_feature",
        "degenerate_features",
        "bootstrap",
        "lambda",
        "lambda_nw",
        "support_rest",
    ]);
    assert_eq!(keys(&v), sorted(&expected));
    assert_eq!(keys(&v["bootstrap"]), sorted(&["draws", "min", "median", "max"]));
    assert_eq!(v["group"].as_array().unwrap().len(), 12);
    assert_eq!(v["group"][0], 4);
}

#[test]
fn group_calibrated_on_null_complement() {
    let dir = tempfile::tempdir().unwrap();
    let mut large = 0;
    for seed in 0..50u64 {
        let input = logistic_csv(dir.path(), 100 + seed);
        let s = seed.to_string();
        let out = grp(&["group", "-i", &input, "--group", "all-but 1..3", "--B", "200", "--seed", &s]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        if json(&out)["p_value"].as_f64().unwrap() > 0.05 {
            large += 1;
        }
        std::fs::remove_file(&input).unwrap();
    }
    assert!(large >= 45, "{large} of 50 p-values above 0.05");
}

#[test]
fn group_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 5);
    for spec in ["0", "16", "1..15", "3..1"] {
        let out = grp(&["group", "-i", &input, "--group", spec]);
        assert_eq!(out.status.code(), Some(1), "{spec}");
        assert!(stderr(&out).contains("--group"), "{spec}: {}", stderr(&out));
    }
}

#[test]
fn fit_huge_lambda_zeroes_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    write_csv(&path, GlmFamily::Gaussian, &[1.0, 0.0, -1.0, 2.0], 80, 6);
    let out = grp(&["fit", "-i", path.to_str().unwrap(), "--family", "gaussian", "--lambda", "1e9"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let mut expected = HEADER_KEYS.to_vec();
    expected.extend([
        "lambda",
        "lambda_source",
        "intercept_value",
        "coefficients",
        "support",
        "kkt_violation",
        "objective",
        "converged",
        "iterations",
    ]);
    assert_eq!(keys(&v), sorted(&expected));
    assert_eq!(v["lambda_source"], "fixed");
    for c in v["coefficients"].as_array().unwrap() {
        assert_eq!(c["value"].as_f64().unwrap(), 0.0);
        assert_eq!(keys(c), sorted(&["feature", "name", "value"]));
    }
    assert!(v["support"].as_array().unwrap().is_empty());
}

#[test]
fn fit_cv_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 7);
    let out = grp(&["fit", "-i", &input, "--lambda", "cv", "--seed", "7", "--folds", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["lambda_source"], "cv");
    assert_eq!(v["cv"]["folds"], 5);
    let lambdas = v["cv"]["lambdas"].as_array().unwrap();
    assert!(!lambdas.is_empty());
    assert_eq!(lambdas.len(), v["cv"]["cv_mean"].as_array().unwrap().len());
    assert!(v["kkt_violation"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn malformed_csv_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b,y\n1,2,0\n3,oops,1\n").unwrap();
    let out = grp(&["fit", "-i", path.to_str().unwrap(), "--lambda", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("row 3") && err.contains("'b'"), "{err}");
}

#[test]
fn single_class_logistic_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    std::fs::write(&path, "a,y\n1,1\n2,1\n3,1\n4,1\n").unwrap();
    let out = grp(&["gof", "-i", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn missing_response_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 8);
    let out = grp(&["fit", "-i", &input, "--response", "outcome"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("outcome"));
}

#[test]
fn simulate_usage_errors() {
    let out = grp(&["simulate", "--scenario", "lowdim-a", "--reps", "0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = grp(&["simulate", "--scenario", "lowdim-a", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(1), "seed is required");
    let out = grp(&["simulate", "--scenario", "nope", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("tab1-rho04-quad"));
}

#[test]
fn simulate_lists_scenarios() {
    let out = grp(&["simulate", "--list-scenarios"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for s in grp_core::catalog() {
        assert!(text.contains(&s.name), "{}", s.name);
    }
}

#[test]
fn simulate_csv_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("mc.csv");
    let out = grp(&[
        "simulate",
        "--scenario",
        "group-n500-p100",
        "--theta",
        "1",
        "--reps",
        "3",
        "--B",
        "50",
        "--seed",
        "2",
        "-o",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rejection_rate="));
    let text = std::fs::read_to_string(&target).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario,rep,p_value,reject,degenerate");
    assert_eq!(lines.len(), 4);
    let records = grp_core::parse_csv_report(&text).unwrap();
    assert!(records.iter().all(|r| r.p_value.is_some()));
}

#[test]
fn simulate_json_omits_timing_unless_asked() {
    let base = ["simulate", "--scenario", "group-n500-p100", "--reps", "2", "--B", "20", "--seed", "4", "--format", "json"];
    let v = json(&grp(&base));
    assert!(v.get("wall_time_secs").is_none());
    assert_eq!(v["reps"], 2);
    let mut timed = base.to_vec();
    timed.push("--timing");
    assert!(json(&grp(&timed))["wall_time_secs"].as_f64().is_some());
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = logistic_csv(dir.path(), 9);
    let args = ["group", "-i", input.as_str(), "--group", "4..", "--B", "100", "--quiet"];
    let a = Command::new(env!("CARGO_BIN_EXE_grp")).args(args).env("GRP_THREADS", "1").output().unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_grp")).args(args).env("GRP_THREADS", "3").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
