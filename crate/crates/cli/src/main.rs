//! `fixedevent`: fit, evaluate and cross-validate prediction intervals for
//! fixed-event forecasts.
//!
//! Exit status is 0 on success, 2 for usage errors, 3 for data errors and 4
//! for numerical failures. Errors go to stderr as one JSON line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fixedevent::crossval::{run_cv, summarize_cv, CvPlan, CvSummary, ModelSpec, DEFAULT_LEVEL};
use fixedevent::data::{self, HorizonMode};
use fixedevent::estimation::{FitConfig, FitResult, ThetaMode};
use fixedevent::evaluation::{dm_test, evaluate_model, interval_score, CasePrediction, DmTestResult, EvalReport};
use fixedevent::simstudy::{run_simstudy, SimConfig, SimSetting};
use fixedevent::{Error, ErrorObservation};

#[derive(Parser)]
#[command(name = "fixedevent", version, about = "Prediction intervals for fixed-event forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model to a dataset and write the fit as JSON.
    Fit(FitArgs),
    /// Central intervals from a fitted model.
    Predict(PredictArgs),
    /// Score interval predictions against observed errors.
    Evaluate(EvaluateArgs),
    /// Leave-one-year-out cross-validation of several models.
    Cv(CvArgs),
    /// Monte Carlo study on simulated AR(1) errors.
    Simulate(SimulateArgs),
    /// Compare external intervals with cross-validated model intervals.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Raw forecasts (institution,forecast_date,target_year,point_forecast)
    /// or errors (case_id,target_year,horizon,error).
    #[arg(long)]
    data: PathBuf,
    /// Realizations (target_year,realization); required with raw forecasts.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    #[arg(long, default_value = "half")]
    horizon_mode: String,
}

#[derive(Args)]
struct FitOpts {
    /// `grid` to estimate theta on 5, 5.5, ..., 20, or `fixed:<value>`.
    #[arg(long, default_value = "grid")]
    theta: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitOpts,
    /// One of ar1, gauss, gauss12, qr, qr12.
    #[arg(long, default_value = "gauss")]
    model: String,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Fit file written by `fit`.
    #[arg(long)]
    params: PathBuf,
    /// Comma-separated horizons in months.
    #[arg(long, value_delimiter = ',', conflicts_with = "cases")]
    horizons: Vec<f64>,
    /// Error file whose cases are predicted.
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Interval file (case_id,target_year,horizon,lower,upper,nominal_level).
    #[arg(long)]
    intervals: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitOpts,
    #[arg(long, value_delimiter = ',', default_value = "ar1,gauss,gauss12,qr,qr12")]
    models: Vec<String>,
    /// Model the others are tested against.
    #[arg(long, default_value = "ar1")]
    baseline: String,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9")]
    rho: Vec<f64>,
    /// Comma-separated `n x t_max` pairs, e.g. `300x20,600x40`.
    #[arg(long, value_delimiter = ',', default_value = "300x20,600x40")]
    settings: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    tau2: f64,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitOpts,
    /// Intervals for the realization (case_id,lower,upper,source).
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ar1,gauss,qr")]
    models: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Lib(Error::InvalidParameter(_)) => 2,
            Failure::Lib(e) if e.is_numerical() => 4,
            Failure::Lib(_) => 3,
        }
    }

    fn json(&self) -> String {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Lib(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", usage(first).json());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cv(a) => cv(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.json());
            ExitCode::from(f.exit_code())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(p) => data::write_json(p, value)?,
        None => print!("{}", data::to_json(value)?),
    }
    Ok(())
}

fn parse_theta(s: &str) -> CliResult<ThetaMode> {
    if s == "grid" {
        return Ok(ThetaMode::Estimated);
    }
    let v = s
        .strip_prefix("fixed:")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| usage(format!("--theta expects grid or fixed:<value>, got {s:?}")))?;
    Ok(ThetaMode::Fixed(v))
}

fn fit_config(opts: &FitOpts) -> CliResult<FitConfig> {
    Ok(FitConfig {
        theta_mode: parse_theta(&opts.theta)?,
        optimizer_restarts: opts.restarts,
        seed: opts.seed,
        ..FitConfig::default()
    })
}

fn specs(names: &[String], base: &FitConfig) -> CliResult<Vec<ModelSpec>> {
    if names.is_empty() {
        return Err(usage("no models given"));
    }
    names
        .iter()
        .map(|n| ModelSpec::from_name(n.trim(), base).map_err(|e| usage(e.to_string())))
        .collect()
}

fn check_level(level: f64) -> CliResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--level must lie in (0, 1), got {level}")))
    }
}

/// Reads either raw forecasts plus outcomes or a ready error file.
fn load_dataset(args: &DataArgs) -> CliResult<Vec<ErrorObservation>> {
    let mode: HorizonMode = args.horizon_mode.parse().map_err(|e: Error| usage(e.to_string()))?;
    let header = data::peek_header(&args.data)?;
    let has = |cols: &[&str]| cols.iter().all(|c| header.iter().any(|h| h == c));
    if has(&data::FORECAST_HEADER) {
        let outcomes = args.outcomes.as_ref().ok_or_else(|| usage("raw forecasts need --outcomes"))?;
        let records = data::read_forecasts(&args.data)?;
        let outcomes = data::read_outcomes(outcomes)?;
        return Ok(data::build_dataset(&records, &outcomes, mode)?);
    }
    if has(&data::ERROR_HEADER) {
        let mut sample = data::read_errors(&args.data)?;
        if mode == HorizonMode::Ceiling {
            for o in &mut sample {
                o.horizon = data::ceiling_horizon(o.horizon)?;
            }
        }
        return Ok(sample);
    }
    Err(Failure::Lib(Error::Parse(format!("{}: header matches neither the forecast nor the error schema", args.data.display()))))
}

fn fit(a: FitArgs) -> CliResult<()> {
    check_level(a.level)?;
    let sample = load_dataset(&a.data)?;
    let base = fit_config(&a.fit)?;
    let spec = ModelSpec::from_name(&a.model, &base).map_err(|e| usage(e.to_string()))?;
    let result = spec.fit(&sample, a.level)?;
    emit_json(a.out.as_deref(), &result)
}

fn predict(a: PredictArgs) -> CliResult<()> {
    check_level(a.level)?;
    let fit: FitResult = data::read_json(&a.params)?;
    let cases: Vec<ErrorObservation> = match &a.cases {
        Some(p) => data::read_errors(p)?,
        None if !a.horizons.is_empty() => {
            a.horizons.iter().map(|&h| ErrorObservation::new(format!("h{h}"), 0, h, 0.0)).collect()
        }
        None => return Err(usage("predict needs --horizons or --cases")),
    };
    let preds = cases
        .iter()
        .map(|o| {
            let interval = fit.model.central_interval(o.horizon, a.level)?;
            Ok(CasePrediction { case_id: o.case_id.clone(), target_year: o.target_year, horizon: o.horizon, interval })
        })
        .collect::<fixedevent::Result<Vec<_>>>()?;
    match &a.out {
        Some(p) => data::write_predictions(p, &preds)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&data::predictions_csv(&preds)?).map_err(Error::from)?;
        }
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let preds = data::read_predictions(&a.intervals)?;
    let sample = load_dataset(&a.data)?;
    let report = evaluate_model(&preds, &sample)?;
    emit_json(a.out.as_deref(), &report)
}

#[derive(Serialize, Deserialize)]
struct FoldBrief {
    held_out_year: i32,
    train_cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    train_objective: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFolds {
    name: String,
    folds: Vec<FoldBrief>,
}

#[derive(Serialize, Deserialize)]
struct CvReport {
    seed: u64,
    summary: CvSummary,
    folds: Vec<ModelFolds>,
}

fn cv(a: CvArgs) -> CliResult<()> {
    check_level(a.level)?;
    let sample = load_dataset(&a.data)?;
    let base = fit_config(&a.fit)?;
    let specs = specs(&a.models, &base)?;
    if !specs.iter().any(|s| s.name == a.baseline) {
        return Err(usage(format!("baseline {:?} is not among --models", a.baseline)));
    }
    let plan = CvPlan::new(&sample, specs, a.level);
    let output = run_cv(&sample, &plan)?;
    let summary = summarize_cv(&output, &sample, &a.baseline)?;
    let folds = output
        .models
        .iter()
        .map(|m| ModelFolds {
            name: m.name.clone(),
            folds: m
                .folds
                .iter()
                .map(|f| FoldBrief {
                    held_out_year: f.held_out_year,
                    train_cases: f.train_cases,
                    theta: f.fit.theta(),
                    train_objective: f.fit.train_objective,
                })
                .collect(),
        })
        .collect();
    emit_json(a.out.as_deref(), &CvReport { seed: a.fit.seed, summary, folds })
}

fn parse_setting(s: &str) -> CliResult<SimSetting> {
    let (n, t) = s.trim().split_once('x').ok_or_else(|| usage(format!("setting {s:?} is not of the form NxT")))?;
    let n = n.parse().map_err(|_| usage(format!("bad sample size in {s:?}")))?;
    let t_max = t.parse().map_err(|_| usage(format!("bad year count in {s:?}")))?;
    Ok(SimSetting { n, t_max })
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    check_level(a.level)?;
    let config = SimConfig {
        replications: a.replications,
        settings: a.settings.iter().map(|s| parse_setting(s)).collect::<CliResult<_>>()?,
        rho_values: a.rho.clone(),
        tau2: a.tau2,
        master_seed: a.seed,
        nominal_level: a.level,
        ..SimConfig::default()
    };
    let result = run_simstudy(&config)?;
    emit_json(a.out.as_deref(), &result)
}

#[derive(Serialize, Deserialize)]
struct BenchmarkComparison {
    model: String,
    model_evaluation: fixedevent::evaluation::Aggregates,
    /// Positive statistics mean the model scores worse than the benchmark.
    dm: DmTestResult,
}

#[derive(Serialize, Deserialize)]
struct BenchmarkReport {
    source: String,
    benchmark: EvalReport,
    comparisons: Vec<BenchmarkComparison>,
}

fn benchmark(a: BenchmarkArgs) -> CliResult<()> {
    check_level(a.level)?;
    let sample = load_dataset(&a.data)?;
    let intervals = data::read_benchmarks(&a.benchmark)?;
    let by_id: std::collections::HashMap<&str, &ErrorObservation> =
        sample.iter().map(|o| (o.case_id.as_str(), o)).collect();

    // benchmark intervals are for the realization; shift them to the error scale
    let mut bench_preds = Vec::with_capacity(intervals.len());
    for b in &intervals {
        let o = by_id
            .get(b.case_id.as_str())
            .ok_or_else(|| Error::Join(format!("benchmark case {} not in the dataset", b.case_id)))?;
        let point = o
            .point_forecast
            .ok_or_else(|| Error::Parse(format!("case {} lacks a point forecast", o.case_id)))?;
        let interval = fixedevent::models::IntervalForecast::new(b.lower - point, b.upper - point, a.level)?;
        bench_preds.push(CasePrediction { case_id: o.case_id.clone(), target_year: o.target_year, horizon: o.horizon, interval });
    }
    let covered: std::collections::HashSet<&str> = bench_preds.iter().map(|p| p.case_id.as_str()).collect();
    let subset: Vec<ErrorObservation> = sample.iter().filter(|o| covered.contains(o.case_id.as_str())).cloned().collect();
    let bench_report = evaluate_model(&bench_preds, &subset)?;

    let base = fit_config(&a.fit)?;
    let plan = CvPlan::new(&sample, specs(&a.models, &base)?, a.level);
    let output = run_cv(&sample, &plan)?;
    let bench_scores: std::collections::HashMap<&str, f64> =
        bench_report.cases.iter().map(|c| (c.case_id.as_str(), c.interval_score)).collect();
    let mut comparisons = Vec::new();
    for m in &output.models {
        let preds: Vec<CasePrediction> =
            m.predictions.iter().filter(|p| covered.contains(p.case_id.as_str())).cloned().collect();
        let report = evaluate_model(&preds, &subset)?;
        let mut model_scores = Vec::new();
        let mut other = Vec::new();
        let mut clusters = Vec::new();
        for c in &report.cases {
            model_scores.push(interval_score(c.lower, c.upper, c.outcome_error, a.level)?);
            other.push(bench_scores[c.case_id.as_str()]);
            clusters.push(c.target_year);
        }
        let dm = dm_test(&model_scores, &other, &clusters)?;
        comparisons.push(BenchmarkComparison { model: m.name.clone(), model_evaluation: report.summary, dm });
    }
    let mut sources: Vec<&str> = intervals.iter().map(|b| b.source.as_str()).collect();
    sources.sort_unstable();
    sources.dedup();
    emit_json(a.out.as_deref(), &BenchmarkReport { source: sources.join(","), benchmark: bench_report, comparisons })
}
