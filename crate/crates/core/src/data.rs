//! Forecast archives, horizon coding and file formats.
//!
//! Inputs are CSV files with a header row. Reports are written as JSON.
//! Every file is written to a temporary sibling first and then renamed into
//! place.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::evaluation::CasePrediction;
use crate::models::IntervalForecast;
use crate::{Error, ErrorObservation, Result};

pub const FORECAST_HEADER: [&str; 4] = ["institution", "forecast_date", "target_year", "point_forecast"];
pub const OUTCOME_HEADER: [&str; 2] = ["target_year", "realization"];
pub const BENCHMARK_HEADER: [&str; 4] = ["case_id", "lower", "upper", "source"];
pub const ERROR_HEADER: [&str; 4] = ["case_id", "target_year", "horizon", "error"];
pub const INTERVAL_HEADER: [&str; 6] = ["case_id", "target_year", "horizon", "lower", "upper", "nominal_level"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawForecastRecord {
    pub institution: String,
    pub forecast_date: NaiveDate,
    pub target_year: i32,
    pub point_forecast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub target_year: i32,
    pub realization: f64,
}

/// A pre-computed interval for the realization itself (not the error).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInterval {
    pub case_id: String,
    pub lower: f64,
    pub upper: f64,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonMode {
    /// Half-month grid.
    Half,
    /// Half-grid horizons rounded up to whole months.
    Ceiling,
}

impl std::str::FromStr for HorizonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(HorizonMode::Half),
            "ceiling" => Ok(HorizonMode::Ceiling),
            other => Err(Error::Parse(format!("unknown horizon mode {other:?}, expected half or ceiling"))),
        }
    }
}

fn last_day_of_month(date: NaiveDate) -> u32 {
    let (y, m) = if date.month() == 12 { (date.year() + 1, 1) } else { (date.year(), date.month() + 1) };
    NaiveDate::from_ymd_opt(y, m, 1).expect("first of month exists").pred_opt().expect("has predecessor").day()
}

/// Months from `forecast_date` to the end of `target_year` on the half-month
/// grid.
///
/// The date is classed as beginning, middle or end of its month by the
/// nearest of day 1, day 15 and the last day, ties going to the earlier
/// anchor. The horizon counts the whole months after the forecast month and
/// adds 1 (beginning), 0.5 (middle) or 0 (end).
pub fn code_horizon(forecast_date: NaiveDate, target_year: i32) -> Result<f64> {
    if forecast_date.year() > target_year {
        return Err(Error::NegativeHorizon(format!("forecast dated {forecast_date} for target year {target_year}")));
    }
    let day = forecast_date.day() as i64;
    let last = last_day_of_month(forecast_date) as i64;
    let anchors = [(1, 1.0), (15, 0.5), (last, 0.0)];
    let mut part = anchors[0];
    for a in &anchors[1..] {
        if (day - a.0).abs() < (day - part.0).abs() {
            part = *a;
        }
    }
    let whole = 12 * (target_year - forecast_date.year()) as i64 + (12 - forecast_date.month() as i64);
    Ok(whole as f64 + part.1)
}

/// Smallest whole month at or above `h`.
pub fn ceiling_horizon(h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::NegativeHorizon(format!("horizon {h}")));
    }
    Ok(h.ceil())
}

/// Stable case id built from the target year and half-grid horizon.
pub fn case_id(target_year: i32, horizon: f64) -> String {
    format!("{target_year}:h{horizon}")
}

/// Turns raw forecasts into error observations.
///
/// Forecasts of the same target year with the same coded horizon are
/// averaged across institutions into one case. The result is sorted by target
/// year and then by decreasing horizon, and does not depend on the record
/// order.
pub fn build_dataset(records: &[RawForecastRecord], outcomes: &[Outcome], mode: HorizonMode) -> Result<Vec<ErrorObservation>> {
    let mut realized: HashMap<i32, f64> = HashMap::with_capacity(outcomes.len());
    for o in outcomes {
        if realized.insert(o.target_year, o.realization).is_some() {
            return Err(Error::Parse(format!("two outcomes for target year {}", o.target_year)));
        }
    }
    // keyed by (year, -2h) so iteration runs through years, longest horizon first
    let mut groups: BTreeMap<(i32, i64), Vec<f64>> = BTreeMap::new();
    for r in records {
        if !r.point_forecast.is_finite() {
            return Err(Error::Parse(format!("non-finite forecast for {} by {}", r.target_year, r.institution)));
        }
        let h = code_horizon(r.forecast_date, r.target_year)?;
        groups.entry((r.target_year, -(2.0 * h) as i64)).or_default().push(r.point_forecast);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((year, neg_half), mut forecasts) in groups {
        let y = *realized.get(&year).ok_or(Error::MissingOutcome(year))?;
        forecasts.sort_by(f64::total_cmp);
        let point = forecasts.iter().sum::<f64>() / forecasts.len() as f64;
        let half = -neg_half as f64 / 2.0;
        let horizon = match mode {
            HorizonMode::Half => half,
            HorizonMode::Ceiling => ceiling_horizon(half)?,
        };
        out.push(ErrorObservation {
            case_id: case_id(year, half),
            target_year: year,
            horizon,
            error: y - point,
            point_forecast: Some(point),
            realization: Some(y),
        });
    }
    Ok(out)
}

fn check_header(reader: &mut csv::Reader<impl Read>, required: &[&str], what: &str) -> Result<()> {
    let header = reader.headers()?.clone();
    for col in required {
        if !header.iter().any(|h| h == *col) {
            return Err(Error::Parse(format!("{what} file lacks column {col:?}")));
        }
    }
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path, required: &[&str], what: &str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_rows(file, required, what)
}

fn parse_rows<T: DeserializeOwned>(input: impl Read, required: &[&str], what: &str) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut reader, required, what)?;
    let mut rows = Vec::new();
    for (line, row) in reader.deserialize().enumerate() {
        rows.push(row.map_err(|e: csv::Error| Error::Parse(format!("{what} row {}: {e}", line + 1)))?);
    }
    Ok(rows)
}

/// Header row of a CSV file.
pub fn peek_header(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

pub fn read_forecasts(path: &Path) -> Result<Vec<RawForecastRecord>> {
    read_rows(path, &FORECAST_HEADER, "forecast")
}

pub fn read_outcomes(path: &Path) -> Result<Vec<Outcome>> {
    read_rows(path, &OUTCOME_HEADER, "outcome")
}

pub fn read_benchmarks(path: &Path) -> Result<Vec<BenchmarkInterval>> {
    let rows: Vec<BenchmarkInterval> = read_rows(path, &BENCHMARK_HEADER, "benchmark")?;
    if let Some(b) = rows.iter().find(|b| !(b.lower <= b.upper)) {
        return Err(Error::Parse(format!("benchmark interval for {} has lower above upper", b.case_id)));
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct ErrorRow {
    case_id: String,
    target_year: i32,
    horizon: f64,
    error: f64,
    #[serde(default)]
    point_forecast: Option<f64>,
    #[serde(default)]
    realization: Option<f64>,
}

pub fn read_errors(path: &Path) -> Result<Vec<ErrorObservation>> {
    let rows: Vec<ErrorRow> = read_rows(path, &ERROR_HEADER, "error")?;
    Ok(rows
        .into_iter()
        .map(|r| ErrorObservation {
            case_id: r.case_id,
            target_year: r.target_year,
            horizon: r.horizon,
            error: r.error,
            point_forecast: r.point_forecast,
            realization: r.realization,
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct IntervalRow {
    case_id: String,
    target_year: i32,
    horizon: f64,
    lower: f64,
    upper: f64,
    nominal_level: f64,
    #[serde(default)]
    crossed: bool,
}

pub fn read_predictions(path: &Path) -> Result<Vec<CasePrediction>> {
    let rows: Vec<IntervalRow> = read_rows(path, &INTERVAL_HEADER, "interval")?;
    rows.into_iter()
        .map(|r| {
            let mut interval = IntervalForecast::new(r.lower, r.upper, r.nominal_level)
                .map_err(|e| Error::Parse(format!("case {}: {e}", r.case_id)))?;
            interval.crossed = r.crossed;
            Ok(CasePrediction { case_id: r.case_id, target_year: r.target_year, horizon: r.horizon, interval })
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_errors(path: &Path, sample: &[ErrorObservation]) -> Result<()> {
    let rows = sample.iter().map(|o| ErrorRow {
        case_id: o.case_id.clone(),
        target_year: o.target_year,
        horizon: o.horizon,
        error: o.error,
        point_forecast: o.point_forecast,
        realization: o.realization,
    });
    let mut header = ERROR_HEADER.to_vec();
    header.extend(["point_forecast", "realization"]);
    write_atomic(path, &csv_bytes(rows, &header)?)
}

pub fn write_predictions(path: &Path, predictions: &[CasePrediction]) -> Result<()> {
    write_atomic(path, &predictions_csv(predictions)?)
}

/// Interval file contents for `predictions`.
pub fn predictions_csv(predictions: &[CasePrediction]) -> Result<Vec<u8>> {
    let rows = predictions.iter().map(|p| IntervalRow {
        case_id: p.case_id.clone(),
        target_year: p.target_year,
        horizon: p.horizon,
        lower: p.interval.lower,
        upper: p.interval.upper,
        nominal_level: p.interval.nominal_level,
        crossed: p.interval.crossed,
    });
    let mut header = INTERVAL_HEADER.to_vec();
    header.push("crossed");
    csv_bytes(rows, &header)
}

pub fn write_forecasts(path: &Path, records: &[RawForecastRecord]) -> Result<()> {
    write_atomic(path, &csv_bytes(records, &FORECAST_HEADER)?)
}

pub fn write_outcomes(path: &Path, outcomes: &[Outcome]) -> Result<()> {
    write_atomic(path, &csv_bytes(outcomes, &OUTCOME_HEADER)?)
}

pub fn write_benchmarks(path: &Path, intervals: &[BenchmarkInterval]) -> Result<()> {
    write_atomic(path, &csv_bytes(intervals, &BENCHMARK_HEADER)?)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
