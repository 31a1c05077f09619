use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cbbreg::distributions::{
    bb_log_pmf, bb_moments, binom_log_pmf, binom_moments, cbb_log_pmf, cbb_moments, BbParams, BoundedCount, CbbParams,
    Family,
};
use cbbreg::formula::Formula;
use cbbreg::inference::{compare_models, lr_test, standard_errors, ComparisonRow, LrTestResult};
use cbbreg::io::{
    read_dataset, render_comparison, render_distribution, render_fit, render_study, write_text, CsvSchema, FitReport,
    ReportFormat, Trials,
};
use cbbreg::regression::{fit, FitControl, InnerOptimizer, ModelSpec};
use cbbreg::simulation::{run_sensitivity_study, StudyConfig};
use cbbreg::Error;

#[derive(Parser)]
#[command(name = "cbbreg", version, about = "Contaminated beta-binomial regression")]
struct Cli {
    /// Increase diagnostic output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a regression model to a CSV file
    Fit(FitArgs),
    /// Run the contamination sensitivity study
    Simulate(SimulateArgs),
    /// Print a probability mass function and its moments
    Dist(DistArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    #[value(alias = "b", alias = "binomial")]
    Binom,
    #[value(alias = "beta-binomial")]
    Bb,
    #[value(alias = "contaminated-beta-binomial")]
    Cbb,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Binom => Family::Binomial,
            FamilyArg::Bb => Family::BetaBinomial,
            FamilyArg::Cbb => Family::ContaminatedBetaBinomial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Table => ReportFormat::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Simplex,
    QuasiNewton,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    /// Write to this file instead of stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV input file
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "cbb")]
    family: FamilyArg,
    /// Formula for π, with the response on the left: "y ~ x + state"
    #[arg(long)]
    pi: String,
    #[arg(long, default_value = "~ 1")]
    sigma: String,
    #[arg(long, default_value = "~ 1")]
    delta: String,
    #[arg(long, default_value = "~ 1")]
    eta: String,
    /// Column holding the number of trials m
    #[arg(long, conflicts_with = "m", required_unless_present = "m")]
    trials: Option<String>,
    /// Constant number of trials for every row
    #[arg(long)]
    m: Option<u64>,
    /// Treat this column as categorical (repeatable)
    #[arg(long = "factor")]
    factors: Vec<String>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// The file has no header row; columns are V1, V2, …
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value_t = 1e-10)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "quasi-newton")]
    inner: InnerArg,
    #[arg(long, default_value_t = 0)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also fit the nested models and rank them
    #[arg(long)]
    compare: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    m: u64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    beta0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta1: f64,
    /// Contamination fraction (repeatable)
    #[arg(long = "fraction", default_values_t = [0.01, 0.05])]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long, value_enum, default_value = "cbb")]
    family: FamilyArg,
    #[arg(long)]
    m: u64,
    #[arg(long)]
    pi: f64,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[command(flatten)]
    out: Output,
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::TooManyFailures { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn emit(out: &Output, text: &str) -> Result<(), Failure> {
    match &out.output {
        Some(path) => Ok(write_text(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_formula(s: &str) -> Result<Formula, Failure> {
    Ok(s.parse::<Formula>()?)
}

#[derive(Serialize)]
struct FitWithComparison<'a> {
    fit: FitReport,
    comparison: &'a [ComparisonRow],
    lr_test: Option<&'a LrTestResult>,
}

fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let family = Family::from(args.family);
    let pi = parse_formula(&args.pi)?;
    let others = [parse_formula(&args.sigma)?, parse_formula(&args.delta)?, parse_formula(&args.eta)?];
    let response = pi
        .response
        .clone()
        .ok_or_else(|| Failure::Input(format!("the pi formula {:?} needs a response: \"y ~ ...\"", args.pi)))?;
    for f in &others {
        if let Some(r) = &f.response {
            if *r != response {
                return Err(Failure::Input(format!("formula response {r:?} differs from {response:?}")));
            }
        }
    }
    for (f, name) in others.iter().zip(["sigma", "delta", "eta"]) {
        let allowed = match name {
            "sigma" => family != Family::Binomial,
            _ => family == Family::ContaminatedBetaBinomial,
        };
        if !allowed && !f.terms.is_empty() {
            return Err(Failure::Input(format!(
                "the {} family has no {name} parameter; drop --{name}",
                family.short_name()
            )));
        }
    }

    let trials = match (&args.trials, args.m) {
        (Some(c), _) => Trials::Column(c.clone()),
        (None, Some(m)) => Trials::Constant(m),
        (None, None) => return Err(Failure::Input("either --trials or --m is required".into())),
    };
    if !args.delimiter.is_ascii() {
        return Err(Failure::Input("the delimiter must be an ASCII character".into()));
    }
    let mut schema = CsvSchema::new(&response, trials);
    schema.delimiter = args.delimiter as u8;
    schema.header = !args.no_header;
    schema.categorical = args.factors.clone();
    for term in pi.terms.iter().chain(others.iter().flat_map(|f| &f.terms)) {
        if !schema.categorical.contains(term) && !schema.covariates.contains(term) {
            schema.covariates.push(term.clone());
        }
    }
    let data = read_dataset(&args.input, &schema)?;

    let spec = ModelSpec {
        family,
        pi_terms: pi.terms.clone(),
        sigma_terms: others[0].terms.clone(),
        delta_terms: others[1].terms.clone(),
        eta_terms: others[2].terms.clone(),
    };
    let control = FitControl {
        epsilon: args.epsilon,
        max_iterations: args.max_iter,
        inner_optimizer: match args.inner {
            InnerArg::Simplex => InnerOptimizer::Simplex,
            InnerArg::QuasiNewton => InnerOptimizer::QuasiNewton,
        },
        restarts: args.restarts,
        seed: args.seed,
        ..FitControl::default()
    };
    let result = fit(&data, &spec, None, &control)?;
    let report = standard_errors(&data, &spec, &result)?;
    let format = ReportFormat::from(args.out.format);

    let text = if args.compare {
        let nested: &[Family] = match family {
            Family::Binomial => &[],
            Family::BetaBinomial => &[Family::Binomial],
            Family::ContaminatedBetaBinomial => &[Family::Binomial, Family::BetaBinomial],
        };
        let mut fits = nested
            .iter()
            .map(|&f| fit(&data, &spec.restricted_to(f), None, &control))
            .collect::<Result<Vec<_>, Error>>()?;
        fits.push(result.clone());
        let refs: Vec<_> = fits.iter().collect();
        let rows = compare_models(&refs);
        let lr = if family == Family::ContaminatedBetaBinomial {
            let bb = &fits[1];
            let df = (result.n_parameters() - bb.n_parameters()) as u32;
            Some(lr_test(bb.log_likelihood, result.log_likelihood, df)?)
        } else {
            None
        };
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(&FitWithComparison {
                    fit: FitReport::new(&result, &report),
                    comparison: &rows,
                    lr_test: lr.as_ref(),
                })
                .map_err(Error::from)?;
                s.push('\n');
                s
            }
            ReportFormat::Table => {
                render_fit(&result, &report, format)? + "\n" + &render_comparison(&rows, lr.as_ref(), format)?
            }
        }
    } else {
        render_fit(&result, &report, format)?
    };
    emit(&args.out, &text)?;
    if !result.converged {
        return Err(Failure::Numerical(format!("fit did not converge within {} iterations", control.max_iterations)));
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let config = StudyConfig {
        n: args.n,
        m: args.m,
        true_beta: [args.beta0, args.beta1],
        contamination_fractions: args.fractions.clone(),
        replications: args.replications,
        seed: args.seed,
    };
    let report = run_sensitivity_study(&config, &FitControl::default())?;
    emit(&args.out, &render_study(&report, args.out.format.into())?)
}

fn require(value: Option<f64>, name: &str, family: Family) -> Result<f64, Failure> {
    value.ok_or_else(|| Failure::Input(format!("--{name} is required for the {} family", family.short_name())))
}

fn cmd_dist(args: &DistArgs) -> Result<(), Failure> {
    let family = Family::from(args.family);
    let obs = |y: u64| BoundedCount::new(y, args.m);
    let (pmf, moments) = match family {
        Family::Binomial => {
            let pmf =
                (0..=args.m).map(|y| Ok(binom_log_pmf(obs(y)?, args.pi)?.exp())).collect::<Result<Vec<_>, Error>>()?;
            (pmf, binom_moments(args.m, args.pi)?)
        }
        Family::BetaBinomial => {
            let p = BbParams::new(args.pi, require(args.sigma, "sigma", family)?)?;
            let pmf = (0..=args.m).map(|y| Ok(bb_log_pmf(obs(y)?, &p).exp())).collect::<Result<Vec<_>, Error>>()?;
            (pmf, bb_moments(args.m, &p)?)
        }
        Family::ContaminatedBetaBinomial => {
            let p = CbbParams::new(
                args.pi,
                require(args.sigma, "sigma", family)?,
                require(args.delta, "delta", family)?,
                require(args.eta, "eta", family)?,
            )?;
            let pmf = (0..=args.m).map(|y| Ok(cbb_log_pmf(obs(y)?, &p).exp())).collect::<Result<Vec<_>, Error>>()?;
            (pmf, cbb_moments(args.m, &p)?)
        }
    };
    emit(&args.out, &render_distribution(family, &pmf, &moments, args.out.format.into())?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Dist(a) => cmd_dist(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
