//! CSV ingestion and report serialization.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{Family, MomentSet};
use crate::error::{Error, Result};
use crate::inference::{ComparisonRow, InferenceReport, LrTestResult};
use crate::regression::{BoundaryFlags, Dataset, Factor, FitResult, Row};
use crate::simulation::{StudyReport, STUDY_FAMILIES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trials {
    Column(String),
    Constant(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: String,
    pub trials: Trials,
    /// Numeric covariates.
    pub covariates: Vec<String>,
    /// Categorical covariates, expanded to indicators against the first
    /// level in sorted order.
    pub categorical: Vec<String>,
    pub delimiter: u8,
    /// Without a header, columns are named V1, V2, ….
    pub header: bool,
}

impl CsvSchema {
    pub fn new(response: &str, trials: Trials) -> Self {
        Self {
            response: response.to_string(),
            trials,
            covariates: Vec::new(),
            categorical: Vec::new(),
            delimiter: b',',
            header: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut names = vec![&self.response];
        if let Trials::Column(c) = &self.trials {
            names.push(c);
        }
        names.extend(&self.covariates);
        names.extend(&self.categorical);
        for n in names {
            if !seen.insert(n) {
                return Err(Error::Schema(format!("column {n:?} is used twice in the schema")));
            }
        }
        if let Trials::Constant(0) = self.trials {
            return Err(Error::Schema("constant m must be >= 1".into()));
        }
        Ok(())
    }
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    if source.is_io_error() {
        if let csv::ErrorKind::Io(e) = source.into_kind() {
            return Error::Io { path: path.to_path_buf(), source: e };
        }
        unreachable!("is_io_error implies an Io kind");
    }
    Error::Csv { path: path.to_path_buf(), source }
}

/// Reads and validates a dataset. Any malformed row aborts the read.
pub fn read_dataset(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.header)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;

    let header: Vec<String> = if schema.header {
        reader.headers().map_err(|e| csv_err(path, e))?.iter().map(|h| h.trim().to_string()).collect()
    } else {
        Vec::new()
    };
    let index_of = |name: &str, width: usize| -> Result<usize> {
        if schema.header {
            header.iter().position(|h| h == name)
        } else {
            name.strip_prefix('V')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1 && k <= width)
                .map(|k| k - 1)
        }
        .ok_or_else(|| Error::Schema(format!("{}: no column named {name:?}", path.display())))
    };

    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        records.push((line, rec));
    }
    let width = records.first().map(|(_, r)| r.len()).unwrap_or(header.len());
    let y_col = index_of(&schema.response, width)?;
    let m_col = match &schema.trials {
        Trials::Column(c) => Some(index_of(c, width)?),
        Trials::Constant(_) => None,
    };
    let cov_cols: Vec<usize> = schema.covariates.iter().map(|c| index_of(c, width)).collect::<Result<_>>()?;
    let cat_cols: Vec<usize> = schema.categorical.iter().map(|c| index_of(c, width)).collect::<Result<_>>()?;

    let field = |line: usize, rec: &csv::StringRecord, col: usize, name: &str| -> Result<String> {
        let v = rec.get(col).map(str::trim).unwrap_or("");
        if v.is_empty() || v.eq_ignore_ascii_case("na") {
            return Err(parse_err(line, format!("missing value in column {name:?}")));
        }
        Ok(v.to_string())
    };
    let count = |line: usize, rec: &csv::StringRecord, col: usize, name: &str| -> Result<u64> {
        let v = field(line, rec, col, name)?;
        v.parse::<u64>().map_err(|_| parse_err(line, format!("column {name:?}: {v:?} is not a non-negative integer")))
    };

    let mut rows = Vec::with_capacity(records.len());
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); cat_cols.len()];
    for (line, rec) in &records {
        let line = *line;
        let y = count(line, rec, y_col, &schema.response)?;
        let m = match (&schema.trials, m_col) {
            (Trials::Constant(m), _) => *m,
            (Trials::Column(name), Some(col)) => count(line, rec, col, name)?,
            _ => unreachable!(),
        };
        if m == 0 {
            return Err(parse_err(line, "m must be >= 1".into()));
        }
        if y > m {
            return Err(parse_err(line, format!("response y = {y} exceeds m = {m}")));
        }
        let mut covariates = Vec::with_capacity(cov_cols.len());
        for (name, &col) in schema.covariates.iter().zip(&cov_cols) {
            let v = field(line, rec, col, name)?;
            let x = v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line, format!("column {name:?}: {v:?} is not a finite number (categorical columns must be declared as factors)")))?;
            covariates.push(x);
        }
        for (k, (name, &col)) in schema.categorical.iter().zip(&cat_cols).enumerate() {
            levels[k].push(field(line, rec, col, name)?);
        }
        rows.push(Row { y, m, covariates });
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }

    let mut columns = schema.covariates.clone();
    let mut factors = Vec::new();
    for (k, name) in schema.categorical.iter().enumerate() {
        let sorted: Vec<String> = levels[k].iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let factor = Factor { name: name.clone(), reference: sorted[0].clone(), levels: sorted[1..].to_vec() };
        for level in &factor.levels {
            columns.push(factor.column_name(level));
            for (row, value) in rows.iter_mut().zip(&levels[k]) {
                row.covariates.push(if value == level { 1.0 } else { 0.0 });
            }
        }
        factors.push(factor);
    }
    let mut data = Dataset::new(columns, rows)?;
    for f in factors {
        data = data.with_factor(f)?;
    }
    Ok(data)
}

/// Writes `y`, `m` and every covariate column (factor indicators included).
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["y".to_string(), "m".to_string()];
    header.extend(data.columns().iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in data.rows() {
        let mut rec = vec![row.y.to_string(), row.m.to_string()];
        rec.extend(row.covariates.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Rows with posterior contaminant probability above 0.5.
    pub above_half: usize,
}

/// Machine-readable fit summary; field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: String,
    pub n_obs: usize,
    pub n_parameters: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub hessian_ok: bool,
    pub condition_number: Option<f64>,
    pub boundary: BoundaryFlags,
    pub coefficients: Vec<CoefficientRow>,
    pub posterior_weights: Option<WeightSummary>,
}

impl FitReport {
    pub fn new(fit: &FitResult, report: &InferenceReport) -> Self {
        let coefficients = report
            .labels
            .iter()
            .enumerate()
            .map(|(j, name)| CoefficientRow {
                name: name.clone(),
                estimate: report.estimates[j],
                se: report.standard_errors.as_ref().map(|s| s[j]),
                unreliable: report.unreliable[j],
            })
            .collect();
        let w = &fit.posterior_weights;
        let posterior_weights = (!w.is_empty()).then(|| WeightSummary {
            min: w.iter().copied().fold(f64::INFINITY, f64::min),
            mean: w.iter().sum::<f64>() / w.len() as f64,
            max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            above_half: w.iter().filter(|&&v| v > 0.5).count(),
        });
        Self {
            family: fit.family.short_name().to_string(),
            n_obs: fit.n_obs,
            n_parameters: report.n_parameters,
            log_likelihood: fit.log_likelihood,
            aic: report.aic,
            bic: report.bic,
            hqic: report.hqic,
            iterations: fit.iterations,
            converged: fit.converged,
            hessian_ok: report.hessian_ok,
            condition_number: report.condition_number.is_finite().then_some(report.condition_number),
            boundary: fit.boundary,
            coefficients,
            posterior_weights,
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Fit summary as JSON or as an "estimate (SE)" table.
pub fn render_fit(fit: &FitResult, report: &InferenceReport, format: ReportFormat) -> Result<String> {
    let summary = FitReport::new(fit, report);
    if format == ReportFormat::Json {
        return to_json(&summary);
    }
    let mut s = String::new();
    let width = summary.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(0).max(11);
    writeln!(s, "{}-RM  n = {}  k = {}", summary.family, summary.n_obs, summary.n_parameters).unwrap();
    writeln!(s, "{:<width$}  estimate (SE)", "coefficient").unwrap();
    let mut flagged = false;
    for c in &summary.coefficients {
        let se = match c.se {
            Some(v) => format!("({v:.3})"),
            None => "(n/a)".to_string(),
        };
        let mark = if c.unreliable { " *" } else { "" };
        flagged |= c.unreliable;
        writeln!(s, "{:<width$}  {:.3} {se}{mark}", c.name, c.estimate).unwrap();
    }
    writeln!(s, "log-likelihood  {:.3}", summary.log_likelihood).unwrap();
    writeln!(s, "AIC  {:.3}   BIC  {:.3}   HQIC  {:.3}", summary.aic, summary.bic, summary.hqic).unwrap();
    writeln!(s, "iterations  {}   converged  {}", summary.iterations, if summary.converged { "yes" } else { "no" })
        .unwrap();
    if let Some(w) = &summary.posterior_weights {
        writeln!(
            s,
            "posterior weights  min {:.3}  mean {:.3}  max {:.3}  above 0.5: {}",
            w.min, w.mean, w.max, w.above_half
        )
        .unwrap();
    }
    if !summary.hessian_ok {
        writeln!(s, "note: negative Hessian is not positive definite; SEs omitted").unwrap();
    }
    if flagged {
        writeln!(s, "* linear predictor beyond ±30; SE unreliable").unwrap();
    }
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: PathBuf::from(path), source })
}

pub fn write_report(fit: &FitResult, report: &InferenceReport, path: &Path, format: ReportFormat) -> Result<()> {
    write_text(path, &render_fit(fit, report, format)?)
}

#[derive(Serialize)]
struct ComparisonJson<'a> {
    models: &'a [ComparisonRow],
    lr_test: Option<&'a LrTestResult>,
}

/// Criteria table with ranks, followed by the BB vs cBB LR test.
pub fn render_comparison(rows: &[ComparisonRow], lr: Option<&LrTestResult>, format: ReportFormat) -> Result<String> {
    if format == ReportFormat::Json {
        return to_json(&ComparisonJson { models: rows, lr_test: lr });
    }
    let mut s = String::new();
    writeln!(s, "{:<8}{:>3}{:>13}{:>15}{:>15}{:>15}", "model", "k", "loglik", "AIC", "BIC", "HQIC").unwrap();
    for r in rows {
        let name = format!("{}-RM", r.family.short_name());
        let cell = |v: f64, rank: usize| format!("{v:.3} ({rank})");
        writeln!(
            s,
            "{name:<8}{:>3}{:>13.3}{:>15}{:>15}{:>15}",
            r.k,
            r.log_likelihood,
            cell(r.aic, r.aic_rank),
            cell(r.bic, r.bic_rank),
            cell(r.hqic, r.hqic_rank)
        )
        .unwrap();
    }
    if let Some(t) = lr {
        writeln!(s, "LR test BB-RM vs cBB-RM: statistic {:.3}, df {}, p-value {:.3}", t.statistic, t.df, t.p_value)
            .unwrap();
    }
    Ok(s)
}

fn family_header(f: Family) -> String {
    format!("{}-RM", f.short_name())
}

/// Bias and MSE per family and contamination fraction.
pub fn render_study(report: &StudyReport, format: ReportFormat) -> Result<String> {
    if format == ReportFormat::Json {
        return to_json(report);
    }
    let fractions = &report.config.contamination_fractions;
    let mut s = String::new();
    writeln!(
        s,
        "n = {}, m = {}, beta = ({}, {}), replications = {}, seed = {}",
        report.config.n,
        report.config.m,
        report.config.true_beta[0],
        report.config.true_beta[1],
        report.config.replications,
        report.config.seed
    )
    .unwrap();
    write!(s, "{:<12}", "").unwrap();
    for f in fractions {
        let label = format!("{}%", f * 100.0);
        write!(s, "{:^30}", label).unwrap();
    }
    s.push('\n');
    write!(s, "{:<12}", "").unwrap();
    for _ in fractions {
        for fam in STUDY_FAMILIES {
            write!(s, "{:>10}", family_header(fam)).unwrap();
        }
    }
    s.push('\n');
    for (stat, name) in [(0, "Bias"), (1, "MSE")] {
        for coef in 0..2 {
            write!(s, "{:<12}", format!("{name} beta{coef}")).unwrap();
            for &f in fractions {
                for fam in STUDY_FAMILIES {
                    let v =
                        report.cell(fam, f, coef).map(|c| if stat == 0 { c.bias } else { c.mse }).unwrap_or(f64::NAN);
                    write!(s, "{v:>10.4}").unwrap();
                }
            }
            s.push('\n');
        }
    }
    for c in &report.counts {
        if c.failed > 0 || c.not_converged > 0 {
            writeln!(
                s,
                "{} at {}%: {} failed, {} not converged",
                family_header(c.family),
                c.fraction * 100.0,
                c.failed,
                c.not_converged
            )
            .unwrap();
        }
    }
    Ok(s)
}

#[derive(Serialize)]
struct DistJson<'a> {
    family: &'a str,
    m: u64,
    pmf: &'a [f64],
    moments: &'a MomentSet,
}

/// PMF over {0, …, m} followed by the moments.
pub fn render_distribution(family: Family, pmf: &[f64], moments: &MomentSet, format: ReportFormat) -> Result<String> {
    let m = pmf.len() as u64 - 1;
    if format == ReportFormat::Json {
        return to_json(&DistJson { family: family.short_name(), m, pmf, moments });
    }
    let mut s = String::new();
    writeln!(s, "{:>6}  {:>22}", "y", "probability").unwrap();
    for (y, p) in pmf.iter().enumerate() {
        writeln!(s, "{y:>6}  {p:>22.15e}").unwrap();
    }
    writeln!(s, "mean             {:.12}", moments.mean).unwrap();
    writeln!(s, "variance         {:.12}", moments.variance).unwrap();
    writeln!(s, "skewness         {:.12}", moments.skewness).unwrap();
    writeln!(s, "excess kurtosis  {:.12}", moments.excess_kurtosis).unwrap();
    Ok(s)
}
