use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusionkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("custom.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn joint_analysis_reports_psd_synergy() {
    let sc = scenario("two_modality.json");
    let v = run_json(&["analyze", sc.to_str().unwrap(), "--joint", "eeg,meg"]);
    let mins = v["synergy_min_eigenvalues"].as_array().unwrap();
    assert!(mins.iter().all(|x| x.as_f64().unwrap() >= -1e-10));
    assert!(v["sigma_max_rho"].as_f64().unwrap() < 1.0);
    assert_eq!(v["pair"], serde_json::json!(["eeg", "meg"]));
}

#[test]
fn single_modality_analysis_has_crlb() {
    let sc = scenario("two_modality.json");
    let v = run_json(&["analyze", sc.to_str().unwrap(), "--modality", "eeg"]);
    assert_eq!(v["crlb"].as_array().unwrap().len(), 2);
    assert!(v["mc"].is_null());
}

#[test]
fn underdetermined_modality_is_rejected() {
    let sc = scenario("underdetermined.json");
    let out = run(&["analyze", sc.to_str().unwrap(), "--modality", "single"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Fisher information matrix is singular"), "{}", stderr(&out));
}

#[test]
fn out_flag_writes_file_instead_of_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let sc = scenario("two_modality.json");
    let out = run(&[
        "analyze",
        sc.to_str().unwrap(),
        "--modality",
        "meg",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["modality"], "meg");
}

#[test]
fn advise_flags_redundant_second_modality() {
    let sc = scenario("redundant.json");
    let v = run_json(&["advise", sc.to_str().unwrap(), "--pair", "x,y"]);
    assert_eq!(v["verdict"], "SecondRedundant");
}

#[test]
fn advise_fuses_complementary_modalities() {
    let sc = scenario("complementary.json");
    let v = run_json(&["advise", sc.to_str().unwrap(), "--pair", "x,y"]);
    assert_eq!(v["verdict"], "Fuse");
    assert_eq!(v["regime"], "Uncorrelated");
}

#[test]
fn place_reports_stationary_solution() {
    let sc = scenario("two_modality.json");
    let v = run_json(&["place", sc.to_str().unwrap(), "--primary", "eeg", "--budget", "5"]);
    assert_eq!(v["degenerate"], false);
    assert!(v["kkt_residual"].as_f64().unwrap() < 1e-5);
    assert!(v["lambda"].as_f64().unwrap() >= 0.0);
    let b = v["B_star"].as_array().unwrap();
    let power: f64 = b
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap().powi(2)))
        .sum();
    assert!((power - 5.0).abs() <= 1e-8 * 6.0);
}

#[test]
fn place_with_uncorrelated_noise_is_degenerate() {
    let sc = scenario("complementary.json");
    let v = run_json(&["place", sc.to_str().unwrap(), "--primary", "x", "--budget", "2"]);
    assert_eq!(v["degenerate"], true);
    assert!(v["lambda"].is_null());
    assert!(v["explanation"].as_str().unwrap().contains("Tr"));
}

#[test]
fn place_budget_below_natural_level_is_numerical_error() {
    let sc = scenario("two_modality.json");
    let out = run(&["place", sc.to_str().unwrap(), "--primary", "eeg", "--budget", "0.01"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_ml_matches_bound_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("two_modality.json");
    let mut csvs = Vec::new();
    for k in 0..2 {
        let target = dir.path().join(format!("run{k}.json"));
        let out = run(&[
            "simulate",
            sc.to_str().unwrap(),
            "--method",
            "ml",
            "--N",
            "200000",
            "--seed",
            "11",
            "--out",
            target.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
        assert!(v["frobenius_rel_err"].as_f64().unwrap() < 0.05);
        assert_eq!(v["crlb_check"]["passed"], true);
        csvs.push(std::fs::read(target.with_extension("csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert!(text.starts_with("scenario,method,N,seed,rel_err,crlb_min_eig,passed\n"));
}

#[test]
fn mmse_without_gaussian_prior_fails() {
    let sc = scenario("redundant.json");
    let out = run(&["simulate", sc.to_str().unwrap(), "--method", "mmse", "--N", "1000", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MMSE requires Gaussian prior"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_one() {
    let sc = scenario("two_modality.json");
    let sc = sc.to_str().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", sc]).status.code(), Some(1));
    assert_eq!(run(&["advise", sc, "--pair", "eeg"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", sc, "--method", "ml", "--N", "10", "--seed", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_scenarios_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let not_pd = write_scenario(
        dir.path(),
        r#"{"sources": {"gaussian": {"mean": [0], "cov": [[1]]}},
            "modalities": [{"name": "a", "A": [[1]], "noise_cov": [[-1]]}]}"#,
    );
    let out = run(&["analyze", not_pd.to_str().unwrap(), "--modality", "a"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let unknown_field = write_scenario(
        dir.path(),
        r#"{"sources": {"gaussian": {"mean": [0], "cov": [[1]]}},
            "modalities": [{"name": "a", "A": [[1]], "noise_cov": [[1]], "gain": 3}]}"#,
    );
    let out = run(&["analyze", unknown_field.to_str().unwrap(), "--modality", "a"]);
    assert_eq!(out.status.code(), Some(2));

    let sc = scenario("two_modality.json");
    let out = run(&["analyze", sc.to_str().unwrap(), "--modality", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonlinear_square_modality_uses_monte_carlo() {
    let sc = scenario("nonlinear.json");
    let v = run_json(&["analyze", sc.to_str().unwrap(), "--modality", "square"]);
    assert_eq!(v["mc"]["N"], 100_000);
    assert!(v["snr"][0][0].as_f64().unwrap() > 3.5);
}

#[test]
fn thread_count_does_not_change_output() {
    let sc = scenario("nonlinear.json");
    let sc = sc.to_str().unwrap();
    let run_with = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_fusionkit"))
            .args(["analyze", sc, "--joint", "square,sine"])
            .env("FUSIONKIT_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run_with("1"), run_with("4"));
}
