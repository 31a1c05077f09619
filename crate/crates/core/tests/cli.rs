use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cbbreg::distributions::brute_force_moments;
use cbbreg::io::write_dataset;
use cbbreg::simulation::{contaminate, generate_binomial_data};
use serde_json::Value;

fn cbbreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbbreg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against the stored output; set UPDATE_GOLDEN=1 to rewrite it.
fn check_golden(name: &str, args: &[&str]) {
    let first = cbbreg(args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = cbbreg(args);
    assert_eq!(first.stdout, second.stdout, "output differs between runs");
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &first.stdout).unwrap();
    }
    let want = std::fs::read(&path).unwrap();
    assert!(first.stdout == want, "{name} changed:\n{}", stdout(&first));
}

#[test]
fn dist_golden() {
    check_golden(
        "dist_cbb.txt",
        &["dist", "--family", "cbb", "--m", "10", "--pi", "0.5", "--sigma", "0.1", "--delta", "0.25", "--eta", "10"],
    );
    check_golden(
        "dist_bb.json",
        &["dist", "--family", "bb", "--m", "5", "--pi", "0.3", "--sigma", "0.2", "--format", "json"],
    );
}

#[test]
fn simulate_golden() {
    check_golden("simulate_r5_s7.txt", &["simulate", "--replications", "5", "--seed", "7"]);
}

fn dist_json(args: &[&str]) -> Value {
    let mut all = vec!["dist", "--format", "json"];
    all.extend_from_slice(args);
    let o = cbbreg(&all);
    assert!(o.status.success());
    serde_json::from_slice(&o.stdout).unwrap()
}

fn pmf(v: &Value) -> Vec<f64> {
    v["pmf"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect()
}

#[test]
fn dist_output_is_consistent() {
    let v =
        dist_json(&["--family", "cbb", "--m", "10", "--pi", "0.5", "--sigma", "0.1", "--delta", "0.25", "--eta", "10"]);
    let p = pmf(&v);
    assert_eq!(p.len(), 11);
    assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

    let v =
        dist_json(&["--family", "cbb", "--m", "12", "--pi", "0.2", "--sigma", "0.1", "--delta", "0.25", "--eta", "5"]);
    let p = pmf(&v);
    let brute = brute_force_moments(12, |y| p[y as usize].ln()).unwrap();
    let mo = &v["moments"];
    for (key, want) in [
        ("mean", brute.mean),
        ("variance", brute.variance),
        ("skewness", brute.skewness),
        ("excess_kurtosis", brute.excess_kurtosis),
    ] {
        let got = mo[key].as_f64().unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{key}: {got} vs {want}");
    }

    let bb = pmf(&dist_json(&["--family", "bb", "--m", "10", "--pi", "0.3", "--sigma", "1e-9"]));
    let b = pmf(&dist_json(&["--family", "binom", "--m", "10", "--pi", "0.3"]));
    assert!(bb.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6));
}

#[test]
fn usage_errors_exit_one() {
    let o = cbbreg(&[
        "dist", "--family", "cbb", "--m", "10", "--pi", "1.5", "--sigma", "0.1", "--delta", "0.25", "--eta", "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pi"));
    let o = cbbreg(&[
        "dist", "--family", "cbb", "--m", "10", "--pi", "0.5", "--sigma", "0.1", "--delta", "0.25", "--eta", "0.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
    assert_eq!(cbbreg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cbbreg(&["fit", "--input", "/nonexistent.csv", "--pi", "y ~ 1", "--m", "3"]).status.code(), Some(1));
    assert_eq!(cbbreg(&["simulate", "--fraction", "1.5", "--replications", "1"]).status.code(), Some(1));
    assert_eq!(cbbreg(&["--help"]).status.code(), Some(0));
}

fn contaminated_csv(dir: &Path, seed: u64) -> PathBuf {
    let data = contaminate(&generate_binomial_data(500, 10, [2.0, 1.0], seed).unwrap(), 0.05, seed + 1).unwrap();
    let p = dir.join(format!("d{seed}.csv"));
    write_dataset(&p, &data).unwrap();
    p
}

#[test]
fn fit_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = contaminated_csv(dir.path(), 1);
    let csv = csv.to_str().unwrap();

    let o = cbbreg(&["fit", "-i", csv, "--trials", "m", "--family", "bb", "--pi", "y ~ 1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_parameters"], 2);
    assert_eq!(v["converged"], true);

    let o = cbbreg(&["fit", "-i", csv, "--trials", "m", "--pi", "y ~ x", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let out = dir.path().join("r.json");
    let o =
        cbbreg(&["fit", "-i", csv, "--trials", "m", "--pi", "y ~ x", "--format", "json", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["family"], "cBB");

    let o = cbbreg(&["fit", "-i", csv, "--trials", "m", "--pi", "y ~ nothere"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cbbreg(&["fit", "-i", csv, "--trials", "m", "--pi", "~ x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_ranks_and_tests() {
    let dir = tempfile::tempdir().unwrap();
    let mut cbb_first = 0;
    let seeds = 5;
    for seed in 0..seeds {
        let csv = contaminated_csv(dir.path(), 10 + seed);
        let o = cbbreg(&[
            "fit",
            "-i",
            csv.to_str().unwrap(),
            "--trials",
            "m",
            "--pi",
            "y ~ x",
            "--compare",
            "--format",
            "json",
        ]);
        assert_eq!(o.status.code(), Some(0));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        let rows = v["comparison"].as_array().unwrap();
        let ll: Vec<f64> = rows.iter().map(|r| r["log_likelihood"].as_f64().unwrap()).collect();
        assert!(ll[0] <= ll[1] + 1e-6 && ll[1] <= ll[2] + 1e-6, "{ll:?}");
        assert_eq!(v["lr_test"]["df"], 2);
        if rows[2]["aic_rank"] == 1 {
            cbb_first += 1;
        }
    }
    assert!(2 * cbb_first > seeds, "cBB first in {cbb_first} of {seeds}");
}
