use std::path::Path;

use cbbreg::inference::standard_errors;
use cbbreg::io::{read_dataset, render_fit, write_dataset, write_report, CsvSchema, FitReport, ReportFormat, Trials};
use cbbreg::regression::{fit, Dataset, Row};
use cbbreg::{Error, Family, FitControl, ModelSpec};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn schema(covariates: &[&str]) -> CsvSchema {
    CsvSchema {
        covariates: covariates.iter().map(|s| s.to_string()).collect(),
        ..CsvSchema::new("y", Trials::Column("m".into()))
    }
}

#[test]
fn reads_small_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.csv", "y,m,x\n0,2,0.5\n1,2,-1e-3\n2,2,3\n");
    let d = read_dataset(&p, &schema(&["x"])).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.rows()[1], Row { y: 1, m: 2, covariates: vec![-1e-3] });
}

#[test]
fn errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("y,m,x\n1,10,0\n11,10,0\n", 3, "exceeds"),
        ("y,m,x\n1,10,0\n2,10,0\n3,,0\n", 4, "missing"),
        ("y,m,x\n1,10,NA\n", 2, "missing"),
        ("y,m,x\n1.5,10,0\n", 2, "integer"),
        ("y,m,x\n1,10,abc\n", 2, "factor"),
        ("y,m,x\n1,0,1\n", 2, "m must"),
    ];
    for (text, line, needle) in cases {
        let p = write(dir.path(), "bad.csv", text);
        match read_dataset(&p, &schema(&["x"])) {
            Err(e @ Error::Parse { .. }) => {
                let msg = e.to_string();
                assert!(msg.contains(&format!(":{line}:")) && msg.contains(needle), "{msg}");
            }
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let p = write(dir.path(), "c.csv", "y,m\n1,2\n");
    assert!(matches!(read_dataset(&p, &schema(&["x"])), Err(Error::Schema(_))));
    let p = write(dir.path(), "d.csv", "y,m,x\n");
    assert!(matches!(read_dataset(&p, &schema(&["x"])), Err(Error::EmptyData)));
    assert!(matches!(read_dataset(&dir.path().join("none.csv"), &schema(&[])), Err(Error::Io { .. })));
    let dup = CsvSchema { covariates: vec!["y".into()], ..schema(&[]) };
    assert!(matches!(read_dataset(&p, &dup), Err(Error::Schema(_))));
}

#[test]
fn constant_trials_and_options() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.csv", "3;0.5\n9;1.5\n0;2\n");
    let s = CsvSchema {
        covariates: vec!["V2".into()],
        delimiter: b';',
        header: false,
        ..CsvSchema::new("V1", Trials::Constant(9))
    };
    let d = read_dataset(&p, &s).unwrap();
    assert!(d.rows().iter().all(|r| r.m == 9));
    assert_eq!(d.columns(), ["V2"]);
    let s = CsvSchema { trials: Trials::Constant(8), ..s };
    assert!(read_dataset(&p, &s).is_err());
}

#[test]
fn factors_expand_against_first_sorted_level() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "y,m,state\n1,5,Utah\n2,5,Colorado\n3,5,Idaho\n\"4\",5,Utah\n");
    let s = CsvSchema { categorical: vec!["state".into()], ..schema(&[]) };
    let d = read_dataset(&p, &s).unwrap();
    assert_eq!(d.columns(), ["state:Idaho", "state:Utah"]);
    assert_eq!(d.factors()[0].reference, "Colorado");
    let x: Vec<_> = d.rows().iter().map(|r| r.covariates.clone()).collect();
    assert_eq!(x, vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(d.resolve_term("state").unwrap(), vec![0, 1]);
}

#[test]
fn write_read_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = (0..50)
        .map(|i| Row {
            y: i % 7,
            m: 6 + i % 3,
            covariates: vec![(i as f64 * 0.37).sin() / 3.0, 1e-9 * i as f64 - 0.1, (i as f64).exp()],
        })
        .collect();
    let data = Dataset::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
    let p = dir.path().join("rt.csv");
    write_dataset(&p, &data).unwrap();
    let back = read_dataset(&p, &schema(&["a", "b", "c"])).unwrap();
    for (r, s) in data.rows().iter().zip(back.rows()) {
        assert_eq!((r.y, r.m), (s.y, s.m));
        for (u, v) in r.covariates.iter().zip(&s.covariates) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }
}

fn small_fit(family: Family) -> (Dataset, ModelSpec, cbbreg::FitResult) {
    let data = cbbreg::simulation::contaminate(
        &cbbreg::simulation::generate_binomial_data(200, 10, [1.0, 1.0], 3).unwrap(),
        0.05,
        4,
    )
    .unwrap();
    let spec = ModelSpec::new(family).with_pi(&["x"]);
    let f = fit(&data, &spec, None, &FitControl::default()).unwrap();
    (data, spec, f)
}

#[test]
fn json_report_round_trip() {
    let (data, spec, f) = small_fit(Family::ContaminatedBetaBinomial);
    let rep = standard_errors(&data, &spec, &f).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    write_report(&f, &rep, &p, ReportFormat::Json).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let back: FitReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.log_likelihood.to_bits(), f.log_likelihood.to_bits());
    assert_eq!(back.coefficients.len(), 5);
    let w = back.posterior_weights.unwrap();
    assert!(w.min >= 0.0 && w.max <= 1.0 && w.min <= w.mean && w.mean <= w.max);
    // Keys appear in declaration order.
    let keys = ["\"family\"", "\"n_obs\"", "\"log_likelihood\"", "\"aic\"", "\"iterations\"", "\"coefficients\""];
    let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn table_uses_estimate_se_pairs() {
    let (data, spec, f) = small_fit(Family::BetaBinomial);
    let mut rep = standard_errors(&data, &spec, &f).unwrap();
    let table = render_fit(&f, &rep, ReportFormat::Table).unwrap();
    let line = table.lines().find(|l| l.starts_with("beta[x]")).unwrap();
    let se = rep.standard_errors.as_ref().unwrap()[1];
    assert!(line.contains(&format!("{:.3} ({se:.3})", f.coefficients.beta[1])), "{line}");

    rep.standard_errors = None;
    rep.hessian_ok = false;
    let table = render_fit(&f, &rep, ReportFormat::Table).unwrap();
    assert_eq!(table.matches("(n/a)").count(), 3);
    assert!(table.contains("SEs omitted"));
    let json = render_fit(&f, &rep, ReportFormat::Json).unwrap();
    let back: FitReport = serde_json::from_str(&json).unwrap();
    assert!(back.coefficients.iter().all(|c| c.se.is_none()));
}

#[test]
fn report_write_errors_carry_the_path() {
    let (data, spec, f) = small_fit(Family::Binomial);
    let rep = standard_errors(&data, &spec, &f).unwrap();
    let p = Path::new("/nonexistent-dir/report.json");
    let e = write_report(&f, &rep, p, ReportFormat::Json).unwrap_err();
    assert!(e.to_string().contains("/nonexistent-dir/report.json"));
}
