//! Interval scores, coverage and Diebold-Mariano comparisons.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::models::{tick_loss, IntervalForecast};
use crate::{Error, ErrorObservation, Result};

/// Two-sided 5% normal critical value used to flag DM statistics.
pub const DM_CRITICAL_VALUE: f64 = 1.96;

/// Weight `2 / (1 - level)` on the miss penalties; 10 at level 0.8.
pub fn penalty_weight(nominal_level: f64) -> Result<f64> {
    if !(nominal_level > 0.0 && nominal_level < 1.0) {
        return Err(Error::Domain(format!("nominal level {nominal_level} outside (0, 1)")));
    }
    Ok(2.0 / (1.0 - nominal_level))
}

pub fn interval_score(lower: f64, upper: f64, y: f64, nominal_level: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::Domain(format!("interval lower {lower} exceeds upper {upper}")));
    }
    let w = penalty_weight(nominal_level)?;
    let mut s = upper - lower;
    if y < lower {
        s += w * (lower - y);
    } else if y > upper {
        s += w * (y - upper);
    }
    Ok(s)
}

/// Twice the tick loss, so that an interval score at level `1 - 2a` equals
/// `(1 / (2a)) * [qs(a, l, y) + qs(1 - a, u, y)]`.
pub fn quantile_score(alpha: f64, q: f64, y: f64) -> f64 {
    2.0 * tick_loss(alpha, q, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub case_id: String,
    pub target_year: i32,
    pub horizon: f64,
    pub lower: f64,
    pub upper: f64,
    pub outcome_error: f64,
    pub interval_score: f64,
    pub covered: bool,
    pub length: f64,
}

impl ScoredCase {
    pub fn new(obs: &ErrorObservation, interval: &IntervalForecast) -> Result<Self> {
        let y = obs.error;
        Ok(Self {
            case_id: obs.case_id.clone(),
            target_year: obs.target_year,
            horizon: obs.horizon,
            lower: interval.lower,
            upper: interval.upper,
            outcome_error: y,
            interval_score: interval_score(interval.lower, interval.upper, y, interval.nominal_level)?,
            covered: interval.lower <= y && y <= interval.upper,
            length: interval.upper - interval.lower,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_cases: usize,
    pub coverage: f64,
    pub mean_length: f64,
    pub mean_interval_score: f64,
}

pub fn coverage_and_length(cases: &[ScoredCase]) -> Result<Aggregates> {
    if cases.is_empty() {
        return Err(Error::Domain("no cases to aggregate".into()));
    }
    let n = cases.len() as f64;
    let covered = cases.iter().filter(|c| c.covered).count() as f64;
    Ok(Aggregates {
        n_cases: cases.len(),
        coverage: covered / n,
        mean_length: cases.iter().map(|c| c.length).sum::<f64>() / n,
        mean_interval_score: cases.iter().map(|c| c.interval_score).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmTestResult {
    pub t_basic: f64,
    pub t_clustered: f64,
    pub n_cases: usize,
    pub n_clusters: usize,
    pub mean_score_diff: f64,
}

impl DmTestResult {
    pub fn significant_basic(&self) -> bool {
        self.t_basic.abs() > DM_CRITICAL_VALUE
    }

    pub fn significant_clustered(&self) -> bool {
        self.t_clustered.abs() > DM_CRITICAL_VALUE
    }
}

/// t-tests for a zero mean of `d_i = scores_a[i] - scores_b[i]`. Positive
/// values mean A scores worse than B.
///
/// The basic variance of the mean is `s^2 / n` with the `n - 1` sample
/// variance. The clustered one is `G / (G - 1) * sum_g (sum_{i in g} (d_i -
/// mean))^2 / n^2` over `G` clusters, which reduces to the basic one when
/// every cluster holds a single case.
pub fn dm_test<C: Eq + std::hash::Hash>(scores_a: &[f64], scores_b: &[f64], cluster_ids: &[C]) -> Result<DmTestResult> {
    let n = scores_a.len();
    if scores_b.len() != n || cluster_ids.len() != n {
        return Err(Error::Dimension(format!(
            "score vectors of lengths {n} and {}, {} cluster ids",
            scores_b.len(),
            cluster_ids.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("DM test needs at least 2 cases, got {n}")));
    }
    let d: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let ss: f64 = d.iter().map(|x| (x - mean).powi(2)).sum();
    let var_basic = ss / (nf - 1.0) / nf;

    // cluster sums in order of first appearance, so the result is reproducible
    let mut index: HashMap<&C, usize> = HashMap::new();
    let mut sums: Vec<f64> = Vec::new();
    for (di, c) in d.iter().zip(cluster_ids) {
        let k = *index.entry(c).or_insert_with(|| {
            sums.push(0.0);
            sums.len() - 1
        });
        sums[k] += di - mean;
    }
    let g = sums.len();
    if g < 2 {
        return Err(Error::InvalidParameter("clustered DM test needs at least 2 clusters".into()));
    }
    let gf = g as f64;
    // G/(G-1) * S / n^2, written relative to the basic scaling so that one case
    // per cluster reproduces the basic variance bit for bit
    let correction = (gf / (gf - 1.0)) / (nf / (nf - 1.0));
    let var_clustered = sums.iter().map(|s| s * s).sum::<f64>() / (nf - 1.0) / nf * correction;

    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let negligible = |v: f64| !(v.sqrt() > 1e-14 * scale);
    if negligible(var_basic) || negligible(var_clustered) {
        return Err(Error::DegenerateVariance("score differences have zero variance".into()));
    }
    Ok(DmTestResult {
        t_basic: mean / var_basic.sqrt(),
        t_clustered: mean / var_clustered.sqrt(),
        n_cases: n,
        n_clusters: g,
        mean_score_diff: mean,
    })
}

/// An interval prediction for one forecast case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePrediction {
    pub case_id: String,
    pub target_year: i32,
    pub horizon: f64,
    pub interval: IntervalForecast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: f64,
    #[serde(flatten)]
    pub aggregates: Aggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: Aggregates,
    pub by_horizon: Vec<HorizonSummary>,
    pub cases: Vec<ScoredCase>,
}

/// Scores predictions against outcomes matched by case id. Every prediction
/// needs exactly one outcome and vice versa.
pub fn evaluate_model(predictions: &[CasePrediction], outcomes: &[ErrorObservation]) -> Result<EvalReport> {
    let mut by_id: HashMap<&str, &ErrorObservation> = HashMap::with_capacity(outcomes.len());
    for o in outcomes {
        if by_id.insert(o.case_id.as_str(), o).is_some() {
            return Err(Error::Join(format!("duplicate outcome case id {}", o.case_id)));
        }
    }
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(predictions.len());
    let mut cases = Vec::with_capacity(predictions.len());
    for p in predictions {
        let Some(obs) = by_id.get(p.case_id.as_str()) else {
            return Err(Error::Join(format!("no outcome for case {}", p.case_id)));
        };
        if seen.insert(p.case_id.as_str(), ()).is_some() {
            return Err(Error::Join(format!("duplicate prediction for case {}", p.case_id)));
        }
        cases.push(ScoredCase::new(obs, &p.interval)?);
    }
    if let Some(o) = outcomes.iter().find(|o| !seen.contains_key(o.case_id.as_str())) {
        return Err(Error::Join(format!("no prediction for case {}", o.case_id)));
    }
    if cases.is_empty() {
        return Err(Error::Join("no cases in common".into()));
    }
    report_from_cases(cases)
}

pub fn report_from_cases(cases: Vec<ScoredCase>) -> Result<EvalReport> {
    let summary = coverage_and_length(&cases)?;
    let mut groups: BTreeMap<u64, Vec<ScoredCase>> = BTreeMap::new();
    for c in &cases {
        // horizons are nonnegative, so the bit pattern orders them
        groups.entry(c.horizon.to_bits()).or_default().push(c.clone());
    }
    let by_horizon = groups
        .into_values()
        .map(|g| Ok(HorizonSummary { horizon: g[0].horizon, aggregates: coverage_and_length(&g)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { summary, by_horizon, cases })
}
