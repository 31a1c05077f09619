//! Special functions against 50-digit reference values (see
//! fixtures/gen_oracles.py) and exact big-integer binomials.

use cbbreg::special::{chi_square_survival, log_beta, log_choose, log_gamma, PositiveReal};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde_json::Value;

fn oracle() -> Value {
    serde_json::from_str(include_str!("fixtures/special_oracle.json")).unwrap()
}

fn num(v: &Value) -> f64 {
    match v {
        Value::String(s) => s.parse().unwrap(),
        other => other.as_f64().unwrap(),
    }
}

fn pos(x: f64) -> PositiveReal {
    PositiveReal::new(x).unwrap()
}

fn abs_err(got: f64, want: f64) -> f64 {
    (got - want).abs()
}

#[test]
fn log_gamma_matches_oracle() {
    let table = oracle();
    let rows = table["log_gamma"].as_array().unwrap();
    assert!(rows.len() >= 1000);
    let mut worst = (0.0, 0.0);
    for r in rows {
        let x = num(&r[0]);
        let err = abs_err(log_gamma(pos(x)), num(&r[1]));
        if err > worst.0 {
            worst = (err, x);
        }
    }
    assert!(worst.0 <= 1e-12, "worst absolute error {:e} at x = {}", worst.0, worst.1);
}

#[test]
fn log_beta_matches_oracle() {
    let table = oracle();
    let rows = table["log_beta"].as_array().unwrap();
    assert!(rows.len() >= 1000);
    let mut worst = (0.0, 0.0, 0.0);
    for r in rows {
        let (a, b) = (num(&r[0]), num(&r[1]));
        let got = log_beta(pos(a), pos(b));
        assert_eq!(got, log_beta(pos(b), pos(a)));
        let err = abs_err(got, num(&r[2]));
        if err > worst.0 {
            worst = (err, a, b);
        }
    }
    assert!(worst.0 <= 1e-12, "worst absolute error {:e} at ({}, {})", worst.0, worst.1, worst.2);
}

#[test]
fn chi_square_survival_matches_oracle() {
    let table = oracle();
    let rows = table["chi_square_survival"].as_array().unwrap();
    assert!(rows.len() >= 1000);
    let mut worst = (0.0, 0.0, 0);
    for r in rows {
        let (x, df) = (num(&r[0]), r[1].as_u64().unwrap() as u32);
        let err = (chi_square_survival(x, df).unwrap() - num(&r[2])).abs();
        if err > worst.0 {
            worst = (err, x, df);
        }
    }
    assert!(worst.0 <= 1e-10, "worst abs error {:e} at ({}, {})", worst.0, worst.1, worst.2);
}

#[test]
fn chi_square_survival_is_monotone() {
    for df in [1, 2, 3, 7, 30] {
        let mut prev = 1.0;
        for i in 0..=400 {
            let p = chi_square_survival(0.25 * i as f64, df).unwrap();
            assert!(p <= prev, "df {df} at x = {}", 0.25 * i as f64);
            prev = p;
        }
    }
}

#[test]
fn log_choose_matches_oracle() {
    for r in oracle()["log_choose"].as_array().unwrap() {
        let (m, y) = (r[0].as_u64().unwrap(), r[1].as_u64().unwrap());
        let want = num(&r[2]);
        let got = log_choose(m, y).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "C({m},{y}): {got} vs {want}");
    }
}

fn exact_choose(m: u64, y: u64) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..y {
        c = c * BigUint::from(m - i) / BigUint::from(i + 1);
    }
    c
}

/// ln of a big integer: keep the top 64 bits, shift the rest into the log.
fn big_ln(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 64 {
        return v.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    (v >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

#[test]
fn log_choose_against_big_integers() {
    let want = big_ln(&exact_choose(1875, 400));
    let got = log_choose(1875, 400).unwrap();
    assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");

    for m in 0..=60u64 {
        for y in 0..=m {
            let exact = exact_choose(m, y).to_f64().unwrap();
            let got = log_choose(m, y).unwrap().exp();
            assert!((got - exact).abs() <= 1e-10 * exact, "C({m},{y}) = {exact}, got {got}");
        }
    }
}

#[test]
fn documented_values() {
    assert_eq!(log_gamma(pos(1.0)), 0.0);
    assert!((log_gamma(pos(0.5)) - 0.572_364_942_924_700_1).abs() < 1e-15);
    assert!(log_beta(pos(1.0), pos(1.0)).abs() < 1e-15);
    assert!((log_beta(pos(2.0), pos(3.0)) - (1.0f64 / 12.0).ln()).abs() < 1e-14);
    assert_eq!(log_choose(10, 0).unwrap(), 0.0);
    assert!((log_choose(10, 5).unwrap() - 252f64.ln()).abs() < 1e-13);
    assert_eq!(chi_square_survival(0.0, 4).unwrap(), 1.0);
    assert!((chi_square_survival(3.841459, 1).unwrap() - 0.05).abs() < 1e-7);
    assert!(log_choose(3, 4).is_err());
    assert!(chi_square_survival(-1.0, 2).is_err());
    assert!(chi_square_survival(1.0, 0).is_err());
    assert!(PositiveReal::new(0.0).is_err());
    assert!(PositiveReal::new(f64::NAN).is_err());
}
