//! Leave-one-target-year-out cross-validation.
//!
//! Each target year is predicted by models trained on the cases of every
//! other year. Errors of neighbouring years are still correlated, so the
//! folds only remove same-year dependence.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimation::{fit_ar1, fit_gauss, fit_qr, mean_crps, FitConfig, FitDiagnostics, FitResult, ThetaMode};
use crate::evaluation::{dm_test, evaluate_model, CasePrediction, DmTestResult, EvalReport};
use crate::models::{tick_loss, ErrorModel};
use crate::{Error, ErrorObservation, Result};

/// Smallest training fold a model is fitted on.
pub const MIN_TRAIN_CASES: usize = 3;
pub const DEFAULT_LEVEL: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Ar1,
    Gauss,
    Qr,
    /// Known parameters; nothing is fitted.
    Fixed { model: ErrorModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub config: FitConfig,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, kind: ModelKind, config: FitConfig) -> Self {
        Self { name: name.into(), kind, config }
    }

    /// `ar1`, `gauss`, `gauss12`, `qr` or `qr12`; the `12` variants fix theta.
    pub fn from_name(name: &str, base: &FitConfig) -> Result<Self> {
        let fixed = FitConfig { theta_mode: ThetaMode::Fixed(12.0), ..base.clone() };
        let (kind, config) = match name {
            "ar1" => (ModelKind::Ar1, base.clone()),
            "gauss" => (ModelKind::Gauss, base.clone()),
            "gauss12" => (ModelKind::Gauss, fixed),
            "qr" => (ModelKind::Qr, base.clone()),
            "qr12" => (ModelKind::Qr, fixed),
            other => return Err(Error::InvalidParameter(format!("unknown model {other:?}"))),
        };
        Ok(Self::new(name, kind, config))
    }

    pub fn fixed(name: impl Into<String>, model: ErrorModel) -> Self {
        Self::new(name, ModelKind::Fixed { model }, FitConfig::default())
    }

    /// Fits the spec; quantile regression is fitted at the two ends of the
    /// central interval at `nominal_level`.
    pub fn fit(&self, train: &[ErrorObservation], nominal_level: f64) -> Result<FitResult> {
        let levels = [(1.0 - nominal_level) / 2.0, (1.0 + nominal_level) / 2.0];
        match &self.kind {
            ModelKind::Ar1 => fit_ar1(train, &self.config),
            ModelKind::Gauss => fit_gauss(train, &self.config),
            ModelKind::Qr => fit_qr(train, &self.config, &levels),
            ModelKind::Fixed { model } => Ok(FitResult {
                model: model.clone(),
                train_objective: fixed_objective(model, train)?,
                theta_profile: Vec::new(),
                diagnostics: FitDiagnostics::default(),
            }),
        }
    }
}

fn fixed_objective(model: &ErrorModel, train: &[ErrorObservation]) -> Result<f64> {
    match model {
        ErrorModel::Qr(p) => {
            let mut total = 0.0;
            for c in &p.coeffs {
                for o in train {
                    total += tick_loss(c.level, c.beta0 + c.beta1 * o.horizon.min(p.theta), o.error);
                }
            }
            Ok(total / train.len() as f64)
        }
        _ => mean_crps(model, train),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub years: Vec<i32>,
    pub specs: Vec<ModelSpec>,
    pub nominal_level: f64,
}

impl CvPlan {
    pub fn new(dataset: &[ErrorObservation], specs: Vec<ModelSpec>, nominal_level: f64) -> Self {
        let years: BTreeSet<i32> = dataset.iter().map(|o| o.target_year).collect();
        Self { years: years.into_iter().collect(), specs, nominal_level }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub held_out_year: i32,
    pub train_cases: usize,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCv {
    pub name: String,
    /// Ordered by year, then by dataset order.
    pub predictions: Vec<CasePrediction>,
    pub folds: Vec<FoldFit>,
}

impl ModelCv {
    /// `(min, max)` of the selected theta over folds.
    pub fn theta_range(&self) -> Option<(f64, f64)> {
        let thetas: Vec<f64> = self.folds.iter().filter_map(|f| f.fit.theta()).collect();
        let lo = thetas.iter().copied().reduce(f64::min)?;
        let hi = thetas.iter().copied().reduce(f64::max)?;
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationAudit {
    pub folds_checked: usize,
    pub cases_checked: usize,
    pub violations: usize,
}

impl SeparationAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutput {
    pub nominal_level: f64,
    pub years: Vec<i32>,
    pub models: Vec<ModelCv>,
    pub audit: SeparationAudit,
}

impl CvOutput {
    pub fn iterations(&self) -> usize {
        self.years.len()
    }
}

/// Training and test cases of the fold holding out `year`.
pub fn split_fold(dataset: &[ErrorObservation], year: i32) -> (Vec<&ErrorObservation>, Vec<&ErrorObservation>) {
    dataset.iter().partition(|o| o.target_year != year)
}

/// Checks by hashing that no held-out case id, and no case of the held-out
/// year, is among the training cases of its fold.
pub fn audit_separation(dataset: &[ErrorObservation], years: &[i32]) -> SeparationAudit {
    let mut audit = SeparationAudit { folds_checked: 0, cases_checked: 0, violations: 0 };
    for &year in years {
        let (train, test) = split_fold(dataset, year);
        let train_ids: HashSet<&str> = train.iter().map(|o| o.case_id.as_str()).collect();
        let train_years: HashSet<i32> = train.iter().map(|o| o.target_year).collect();
        audit.folds_checked += 1;
        audit.cases_checked += test.len();
        audit.violations += test.iter().filter(|o| train_ids.contains(o.case_id.as_str())).count();
        if train_years.contains(&year) {
            audit.violations += 1;
        }
    }
    audit
}

fn fold_error(year: i32, e: Error) -> Error {
    let reason = if e.is_numerical() { format!("numerical: {e}") } else { e.to_string() };
    Error::FoldFailure { year, reason }
}

pub fn run_cv(dataset: &[ErrorObservation], plan: &CvPlan) -> Result<CvOutput> {
    if plan.years.len() < 2 {
        return Err(Error::InvalidParameter(format!("cross-validation needs 2 target years, got {}", plan.years.len())));
    }
    if plan.specs.is_empty() {
        return Err(Error::InvalidParameter("no model specifications".into()));
    }
    let mut ids = HashSet::with_capacity(dataset.len());
    if let Some(o) = dataset.iter().find(|o| !ids.insert(o.case_id.as_str())) {
        return Err(Error::InvalidParameter(format!("duplicate case id {}", o.case_id)));
    }
    let planned: HashSet<i32> = plan.years.iter().copied().collect();
    if planned.len() != plan.years.len() {
        return Err(Error::InvalidParameter("duplicate years in the plan".into()));
    }
    if let Some(o) = dataset.iter().find(|o| !planned.contains(&o.target_year)) {
        return Err(Error::InvalidParameter(format!("target year {} missing from the plan", o.target_year)));
    }

    let audit = audit_separation(dataset, &plan.years);
    if !audit.passed() {
        return Err(Error::InvalidParameter(format!("{} separation violations", audit.violations)));
    }

    type Fold = Vec<(FoldFit, Vec<CasePrediction>)>;
    let folds: Vec<Result<Fold>> = plan
        .years
        .par_iter()
        .map(|&year| {
            let (train, test) = split_fold(dataset, year);
            if train.len() < MIN_TRAIN_CASES {
                return Err(Error::FoldFailure {
                    year,
                    reason: format!("{} training cases, need {MIN_TRAIN_CASES}", train.len()),
                });
            }
            let train: Vec<ErrorObservation> = train.into_iter().cloned().collect();
            plan.specs
                .iter()
                .map(|spec| {
                    let fit = spec.fit(&train, plan.nominal_level).map_err(|e| fold_error(year, e))?;
                    let preds = test
                        .iter()
                        .map(|o| {
                            let interval = fit.model.central_interval(o.horizon, plan.nominal_level)?;
                            Ok(CasePrediction { case_id: o.case_id.clone(), target_year: year, horizon: o.horizon, interval })
                        })
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| fold_error(year, e))?;
                    Ok((FoldFit { held_out_year: year, train_cases: train.len(), fit }, preds))
                })
                .collect()
        })
        .collect();

    let mut models: Vec<ModelCv> = plan
        .specs
        .iter()
        .map(|s| ModelCv { name: s.name.clone(), predictions: Vec::with_capacity(dataset.len()), folds: Vec::new() })
        .collect();
    for fold in folds {
        for (m, (fit, preds)) in models.iter_mut().zip(fold?) {
            m.folds.push(fit);
            m.predictions.extend(preds);
        }
    }
    Ok(CvOutput { nominal_level: plan.nominal_level, years: plan.years.clone(), models, audit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmComparison {
    pub model: String,
    pub baseline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<DmTestResult>,
    /// Why no statistic was computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_range: Option<(f64, f64)>,
    pub evaluation: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub nominal_level: f64,
    pub iterations: usize,
    pub audit: SeparationAudit,
    pub models: Vec<ModelSummary>,
    pub dm_tests: Vec<DmComparison>,
}

/// Scores every model and tests each against `baseline` with year clusters.
pub fn summarize_cv(output: &CvOutput, outcomes: &[ErrorObservation], baseline: &str) -> Result<CvSummary> {
    let mut models = Vec::with_capacity(output.models.len());
    for m in &output.models {
        let predicted: HashSet<&str> = m.predictions.iter().map(|p| p.case_id.as_str()).collect();
        let missing = outcomes.iter().filter(|o| !predicted.contains(o.case_id.as_str())).count();
        if missing > 0 {
            return Err(Error::CoverageGap(format!("model {} lacks predictions for {missing} cases", m.name)));
        }
        let evaluation = evaluate_model(&m.predictions, outcomes)?;
        models.push(ModelSummary { name: m.name.clone(), theta_range: m.theta_range(), evaluation });
    }
    let Some(base) = models.iter().find(|m| m.name == baseline) else {
        return Err(Error::InvalidParameter(format!("baseline {baseline:?} is not among the models")));
    };
    let base_scores: HashMap<&str, f64> =
        base.evaluation.cases.iter().map(|c| (c.case_id.as_str(), c.interval_score)).collect();

    let mut dm_tests = Vec::with_capacity(models.len());
    for m in &models {
        let mut a = Vec::with_capacity(m.evaluation.cases.len());
        let mut b = Vec::with_capacity(m.evaluation.cases.len());
        let mut clusters = Vec::with_capacity(m.evaluation.cases.len());
        for c in &m.evaluation.cases {
            a.push(c.interval_score);
            b.push(base_scores[c.case_id.as_str()]);
            clusters.push(c.target_year);
        }
        let (result, note) = match dm_test(&a, &b, &clusters) {
            Ok(r) => (Some(r), None),
            Err(Error::DegenerateVariance(_)) => (None, Some("not applicable: identical scores".to_string())),
            Err(e) => return Err(e),
        };
        dm_tests.push(DmComparison { model: m.name.clone(), baseline: baseline.to_string(), result, note });
    }
    Ok(CvSummary { nominal_level: output.nominal_level, iterations: output.iterations(), audit: output.audit, models, dm_tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar1::{simulate_errors, Ar1Params, ErrorSampleDesign};

    fn toy() -> Vec<ErrorObservation> {
        let mut v = Vec::new();
        for (k, year) in [2001, 2002, 2003].into_iter().enumerate() {
            for h in [1.0, 4.0, 8.0, 12.0, 16.0] {
                let e = (k as f64 - 1.0) * 0.3 + 0.05 * h * if (h as i32) % 2 == 0 { 1.0 } else { -1.0 };
                v.push(ErrorObservation::new(format!("{year}:{h}"), year, h, e));
            }
        }
        v
    }

    #[test]
    fn held_out_year_not_in_training() {
        let data = toy();
        let (train, test) = split_fold(&data, 2002);
        assert!(train.iter().all(|o| o.target_year == 2001 || o.target_year == 2003));
        assert!(test.iter().all(|o| o.target_year == 2002));
        assert_eq!(train.len() + test.len(), data.len());
    }

    #[test]
    fn cv_predicts_every_case_once() {
        let data = toy();
        let base = FitConfig { optimizer_restarts: 0, ..FitConfig::default() };
        let specs = ["ar1", "gauss12", "qr12"].iter().map(|n| ModelSpec::from_name(n, &base).unwrap()).collect();
        let plan = CvPlan::new(&data, specs, DEFAULT_LEVEL);
        let out = run_cv(&data, &plan).unwrap();
        assert_eq!(out.iterations(), 3);
        assert!(out.audit.passed());
        for m in &out.models {
            assert_eq!(m.predictions.len(), data.len());
            assert_eq!(m.folds.len(), 3);
            assert!(m.folds.iter().all(|f| f.train_cases == 10));
        }
        let summary = summarize_cv(&out, &data, "ar1").unwrap();
        assert!(summary.dm_tests[0].result.is_none());
        assert!(summary.dm_tests[0].note.is_some());
    }

    #[test]
    fn small_fold_fails_with_year() {
        let data = vec![
            ErrorObservation::new("a", 2001, 3.0, 0.1),
            ErrorObservation::new("b", 2002, 3.0, -0.2),
            ErrorObservation::new("c", 2002, 6.0, 0.4),
        ];
        let plan = CvPlan::new(&data, vec![ModelSpec::from_name("ar1", &FitConfig::default()).unwrap()], 0.8);
        assert!(matches!(run_cv(&data, &plan), Err(Error::FoldFailure { year: 2001, .. })));
    }

    #[test]
    fn missing_predictions_are_a_coverage_gap() {
        let params = Ar1Params::new(0.5, 0.1).unwrap();
        let data = simulate_errors(&params, &ErrorSampleDesign::uniform(60, 4, 3)).unwrap();
        let plan = CvPlan::new(&data, vec![ModelSpec::fixed("truth", ErrorModel::Ar1Integer(params))], 0.8);
        let mut out = run_cv(&data, &plan).unwrap();
        out.models[0].predictions.pop();
        assert!(matches!(summarize_cv(&out, &data, "truth"), Err(Error::CoverageGap(_))));
    }
}
