//! Monte Carlo comparison of the interval methods on AR(1)-generated errors.
//!
//! Each replication simulates one error sample, scores the true model on it
//! directly and every fitted method through leave-one-year-out
//! cross-validation, and records the mean interval score per method.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar1::{replication_rng, simulate_errors_with_rng, Ar1Params, ErrorSampleDesign, MAX_HORIZON};
use crate::crossval::{run_cv, summarize_cv, CvPlan, ModelKind, ModelSpec};
use crate::estimation::{FitConfig, ThetaMode};
use crate::models::ErrorModel;
use crate::{Error, Result};

pub const METHODS: [&str; 6] = ["Truth", "Truth-est", "Gauss-theta-hat", "Gauss-12", "QR-theta-hat", "QR-12"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSetting {
    pub n: usize,
    pub t_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: usize,
    pub settings: Vec<SimSetting>,
    pub rho_values: Vec<f64>,
    pub tau2: f64,
    pub master_seed: u64,
    pub nominal_level: f64,
    /// Configuration shared by the fitted methods; the theta mode is set per
    /// method.
    pub fit: FitConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            replications: 200,
            settings: vec![SimSetting { n: 300, t_max: 20 }, SimSetting { n: 600, t_max: 40 }],
            rho_values: vec![0.5, 0.9],
            tau2: 0.1,
            master_seed: 0,
            nominal_level: 0.8,
            fit: FitConfig { optimizer_restarts: 0, ..FitConfig::default() },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("need at least one replication".into()));
        }
        if self.settings.is_empty() || self.rho_values.is_empty() {
            return Err(Error::InvalidParameter("empty simulation grid".into()));
        }
        for s in &self.settings {
            if s.t_max < 2 {
                return Err(Error::InvalidParameter(format!("t_max = {} leaves nothing to cross-validate", s.t_max)));
            }
            if s.n == 0 {
                return Err(Error::InvalidParameter("sample size 0".into()));
            }
        }
        for &rho in &self.rho_values {
            Ar1Params::new(rho, self.tau2)?;
        }
        if !(self.nominal_level > 0.0 && self.nominal_level < 1.0) {
            return Err(Error::Domain(format!("nominal level {} outside (0, 1)", self.nominal_level)));
        }
        Ok(())
    }

    fn specs(&self, truth: Ar1Params) -> Vec<ModelSpec> {
        let estimated = FitConfig { theta_mode: ThetaMode::Estimated, ..self.fit.clone() };
        let fixed = FitConfig { theta_mode: ThetaMode::Fixed(12.0), ..self.fit.clone() };
        vec![
            ModelSpec::fixed(METHODS[0], ErrorModel::Ar1Integer(truth)),
            ModelSpec::new(METHODS[1], ModelKind::Ar1, self.fit.clone()),
            ModelSpec::new(METHODS[2], ModelKind::Gauss, estimated.clone()),
            ModelSpec::new(METHODS[3], ModelKind::Gauss, fixed.clone()),
            ModelSpec::new(METHODS[4], ModelKind::Qr, estimated),
            ModelSpec::new(METHODS[5], ModelKind::Qr, fixed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    pub mean_interval_score: f64,
    /// Sample SD of the replication means over `sqrt(replications)`.
    pub mc_se: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub replication_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub n: usize,
    pub t_max: usize,
    pub rho: f64,
    pub methods: Vec<MethodStats>,
}

impl SimCell {
    pub fn method(&self, name: &str) -> Option<&MethodStats> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub cells: Vec<SimCell>,
}

impl SimResult {
    pub fn cell(&self, n: usize, rho: f64) -> Option<&SimCell> {
        self.cells.iter().find(|c| c.n == n && c.rho == rho)
    }
}

/// Per-method (mean IS, coverage, mean length) for one replication.
type RepOutcome = Vec<(f64, f64, f64)>;

fn replicate(config: &SimConfig, setting: SimSetting, params: Ar1Params, stream: u64) -> Result<RepOutcome> {
    let mut rng = replication_rng(config.master_seed, stream);
    let design = ErrorSampleDesign { n: setting.n, t_max: setting.t_max, horizon_set: (1..=MAX_HORIZON).collect(), seed: 0 };
    let sample = simulate_errors_with_rng(&params, &design, &mut rng)?;
    let plan = CvPlan::new(&sample, config.specs(params), config.nominal_level);
    let cv = run_cv(&sample, &plan)?;
    let summary = summarize_cv(&cv, &sample, METHODS[0])?;
    Ok(summary
        .models
        .iter()
        .map(|m| {
            let s = m.evaluation.summary;
            (s.mean_interval_score, s.coverage, s.mean_length)
        })
        .collect())
}

fn stats(method: &str, reps: &[&(f64, f64, f64)]) -> MethodStats {
    let r = reps.len() as f64;
    let scores: Vec<f64> = reps.iter().map(|x| x.0).collect();
    let mean = scores.iter().sum::<f64>() / r;
    let sd = if reps.len() > 1 {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    MethodStats {
        method: method.to_string(),
        mean_interval_score: mean,
        mc_se: sd / r.sqrt(),
        coverage: reps.iter().map(|x| x.1).sum::<f64>() / r,
        mean_length: reps.iter().map(|x| x.2).sum::<f64>() / r,
        replication_scores: scores,
    }
}

/// Runs every (setting, rho) cell. Replication `r` of cell `c` draws from
/// stream `c * 2^32 + r` of the master seed, so results do not depend on
/// scheduling.
pub fn run_simstudy(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut cell_index: u64 = 0;
    for &setting in &config.settings {
        for &rho in &config.rho_values {
            let params = Ar1Params::new(rho, config.tau2)?;
            let base = cell_index << 32;
            let reps: Vec<Result<RepOutcome>> = (0..config.replications)
                .into_par_iter()
                .map(|r| {
                    replicate(config, setting, params, base + r as u64)
                        .map_err(|e| Error::Replication { index: r, source: Box::new(e) })
                })
                .collect();
            let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
            let methods = METHODS
                .iter()
                .enumerate()
                .map(|(k, name)| stats(name, &reps.iter().map(|r| &r[k]).collect::<Vec<_>>()))
                .collect();
            cells.push(SimCell { n: setting.n, t_max: setting.t_max, rho, methods });
            cell_index += 1;
        }
    }
    Ok(SimResult { config: config.clone(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            replications: 2,
            settings: vec![SimSetting { n: 60, t_max: 4 }],
            rho_values: vec![0.5],
            master_seed: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_and_complete() {
        let a = run_simstudy(&small()).unwrap();
        assert_eq!(a, run_simstudy(&small()).unwrap());
        assert_eq!(a.cells.len(), 1);
        let names: Vec<&str> = a.cells[0].methods.iter().map(|m| m.method.as_str()).collect();
        assert_eq!(names, METHODS);
        assert!(a.cells[0].methods.iter().all(|m| m.replication_scores.len() == 2 && m.mean_interval_score > 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(SimConfig { replications: 0, ..small() }.validate().is_err());
        assert!(SimConfig { settings: vec![SimSetting { n: 10, t_max: 1 }], ..small() }.validate().is_err());
        assert!(SimConfig { rho_values: vec![1.0], ..small() }.validate().is_err());
    }
}
