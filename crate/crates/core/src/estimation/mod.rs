//! Fitting the error models to a training sample.
//!
//! The AR(1) and Gaussian models are fitted by minimum mean CRPS, quantile
//! regression by minimum tick loss. The leveling horizon `theta` of the
//! piecewise-linear models is either fixed or profiled over a grid, picking
//! the smallest `theta` that attains the lowest training objective.

mod gauss;
pub mod optimize;
pub mod quantreg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar1::{unit_sigma_table, Ar1Params};
use crate::models::{crps_gaussian_unchecked, ErrorModel, GaussParams, QrCoefficients, QrParams};
use crate::normal;
use crate::{Error, ErrorObservation, Result};

pub use optimize::{minimize, Bounds, MinimizeOptions, Minimum};
pub use quantreg::{empirical_quantile, fit_quantile_line, QuantileLine};

/// Lower bound on any fitted standard deviation parameter.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Upper end of the persistence range searched by the AR(1) fit.
pub const RHO_MAX: f64 = 0.99;
pub const DEFAULT_FIXED_THETA: f64 = 12.0;
pub const DEFAULT_LEVELS: [f64; 2] = [0.1, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum ThetaMode {
    Estimated,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub theta_mode: ThetaMode,
    pub theta_grid: Vec<f64>,
    pub optimizer_restarts: usize,
    pub tolerance: f64,
    pub seed: u64,
}

/// `5, 5.5, ..., 20`.
pub fn default_theta_grid() -> Vec<f64> {
    (0..=30).map(|i| 5.0 + 0.5 * i as f64).collect()
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            theta_mode: ThetaMode::Estimated,
            theta_grid: default_theta_grid(),
            optimizer_restarts: 5,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn fixed(theta: f64) -> Self {
        Self { theta_mode: ThetaMode::Fixed(theta), ..Self::default() }
    }

    /// Candidate thetas in ascending order.
    pub fn candidate_thetas(&self) -> Result<Vec<f64>> {
        let mut out = match self.theta_mode {
            ThetaMode::Fixed(v) => vec![v],
            ThetaMode::Estimated => self.theta_grid.clone(),
        };
        if out.is_empty() {
            return Err(Error::InvalidParameter("empty theta grid".into()));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        let (lo, hi) = crate::models::THETA_RANGE;
        if let Some(t) = out.iter().find(|t| !(lo..=hi).contains(*t)) {
            return Err(Error::InvalidParameter(format!("theta {t} outside [{lo}, {hi}]")));
        }
        Ok(out)
    }

    fn minimize_options(&self, restarts: usize) -> MinimizeOptions {
        MinimizeOptions { restarts, tolerance: self.tolerance, seed: self.seed, ..MinimizeOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Objective evaluations (AR(1)), Newton iterations (Gaussian) or pivots
    /// (quantile regression), summed over the theta grid.
    pub iterations: usize,
    /// Best objective of every optimizer run, in run order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restart_objectives: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Quantile levels whose raw fitted quantiles cross somewhere on the
    /// training horizons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crossing_horizons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ErrorModel,
    /// Mean training loss: CRPS for the Gaussian models, summed tick loss over
    /// levels for quantile regression.
    pub train_objective: f64,
    pub theta_profile: Vec<ThetaPoint>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn theta(&self) -> Option<f64> {
        self.model.theta()
    }
}

fn check_sample(sample: &[ErrorObservation], min: usize) -> Result<()> {
    if sample.len() < min {
        return Err(Error::InvalidParameter(format!("need at least {min} observations, got {}", sample.len())));
    }
    for o in sample {
        if !(o.horizon >= 0.0) || (2.0 * o.horizon).fract() != 0.0 {
            return Err(Error::Domain(format!("case {} has horizon {} off the half-month grid", o.case_id, o.horizon)));
        }
        if !o.error.is_finite() {
            return Err(Error::Domain(format!("case {} has a non-finite error", o.case_id)));
        }
    }
    Ok(())
}

fn check_not_degenerate(sample: &[ErrorObservation]) -> Result<()> {
    if sample.iter().all(|o| o.error == 0.0) {
        return Err(Error::Degenerate("all forecast errors are zero".into()));
    }
    Ok(())
}

fn select_theta<T>(profile: Vec<(f64, f64, T)>) -> (usize, Vec<ThetaPoint>, Vec<T>) {
    let mut best = 0;
    for (i, p) in profile.iter().enumerate() {
        if p.1 < profile[best].1 {
            best = i;
        }
    }
    let points = profile.iter().map(|p| ThetaPoint { theta: p.0, objective: p.1 }).collect();
    (best, points, profile.into_iter().map(|p| p.2).collect())
}

/// Horizon lookup into a unit-sigma table: half-grid horizons average the
/// floor and ceiling entries.
struct HalfGrid {
    lo: Vec<usize>,
    hi: Vec<usize>,
    max_h: usize,
}

impl HalfGrid {
    fn new(sample: &[ErrorObservation]) -> Self {
        let lo: Vec<usize> = sample.iter().map(|o| o.horizon.floor() as usize).collect();
        let hi: Vec<usize> = sample.iter().map(|o| o.horizon.ceil() as usize).collect();
        let max_h = hi.iter().copied().max().unwrap_or(0);
        Self { lo, hi, max_h }
    }

    fn unit_sigmas(&self, rho: f64, out: &mut Vec<f64>) {
        let table = unit_sigma_table(rho, self.max_h);
        out.clear();
        out.extend(self.lo.iter().zip(&self.hi).map(|(&l, &h)| 0.5 * (table[l] + table[h])));
    }
}

/// Minimum mean CRPS of `N(0, (tau s_i)^2)` over `tau` for fixed unit scales.
/// The objective is convex in `tau`; safeguarded Newton on its derivative.
fn profile_tau(errors: &[f64], scales: &[f64], tau_start: f64) -> (f64, f64) {
    let n = errors.len() as f64;
    let deriv = |tau: f64| -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        for (&e, &s) in errors.iter().zip(scales) {
            if s == 0.0 {
                continue;
            }
            let z = e / (tau * s);
            let phi = normal::pdf(z);
            g += s * (2.0 * phi - normal::FRAC_1_SQRT_PI);
            h += 2.0 * s * z * z * phi / tau;
        }
        (g / n, h / n)
    };
    let objective = |tau: f64| -> f64 {
        errors
            .iter()
            .zip(scales)
            .map(|(&e, &s)| if s == 0.0 { e.abs() } else { crps_gaussian_unchecked(0.0, tau * s, e) })
            .sum::<f64>()
            / n
    };

    // Newton on the increasing derivative, safeguarded by a bracket
    let (mut lo, mut hi) = (SIGMA_FLOOR, f64::INFINITY);
    let mut tau = tau_start.max(SIGMA_FLOOR);
    for _ in 0..200 {
        let (g, h) = deriv(tau);
        if g < 0.0 {
            lo = tau;
        } else {
            hi = tau;
            if tau <= SIGMA_FLOOR {
                break;
            }
        }
        let newton = if h > 0.0 { tau - g / h } else { f64::NAN };
        if (newton - tau).abs() <= 1e-12 * tau {
            tau = newton.max(SIGMA_FLOOR);
            break;
        }
        let next = if newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * tau
        };
        if (hi.is_finite() && hi - lo <= 1e-14 * hi) || next > 1e12 {
            tau = next;
            break;
        }
        tau = next;
    }
    (tau, objective(tau))
}

/// Minimum-CRPS fit of the zero-mean AR(1)-implied model.
///
/// The scale `tau` is profiled out exactly; persistence is searched over
/// `[0, 0.99]` from the starts 0.1, 0.5 and 0.9.
pub fn fit_ar1(sample: &[ErrorObservation], config: &FitConfig) -> Result<FitResult> {
    check_sample(sample, 1)?;
    check_not_degenerate(sample)?;
    let errors: Vec<f64> = sample.iter().map(|o| o.error).collect();
    let grid = HalfGrid::new(sample);

    // tau start: scale of the shortest-horizon errors
    let mut by_h: Vec<usize> = (0..sample.len()).collect();
    by_h.sort_by(|&a, &b| sample[a].horizon.total_cmp(&sample[b].horizon));
    let short: Vec<usize> = by_h.iter().copied().filter(|&i| sample[i].horizon > 0.0).take((sample.len() / 4).max(1)).collect();
    let tau_start = |scales: &[f64]| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &short {
            num += errors[i] * errors[i];
            den += scales[i] * scales[i];
        }
        if den > 0.0 && num > 0.0 {
            (num / den).sqrt()
        } else {
            1.0
        }
    };

    let mut scales = Vec::with_capacity(sample.len());
    let mut warm: Option<f64> = None;
    let mut profile = |rho: f64| -> (f64, f64) {
        grid.unit_sigmas(rho, &mut scales);
        let start = warm.unwrap_or_else(|| tau_start(&scales));
        let (tau, value) = profile_tau(&errors, &scales, start);
        warm = Some(tau);
        (tau, value)
    };

    let bounds = Bounds::new(vec![0.0], vec![RHO_MAX])?;
    let mut diagnostics = FitDiagnostics::default();
    let mut best: Option<Minimum> = None;
    let mut record = |m: Minimum, best: &mut Option<Minimum>| {
        diagnostics.iterations += m.evaluations;
        diagnostics.restart_objectives.extend(&m.run_values);
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            *best = Some(m);
        }
    };
    for rho0 in [0.1, 0.5, 0.9] {
        let m = minimize(|x| profile(x[0]).1, &[rho0], &bounds, &config.minimize_options(0))?;
        record(m, &mut best);
    }
    if config.optimizer_restarts > 0 {
        let from = best.as_ref().expect("three starts ran").x.clone();
        let m = minimize(|x| profile(x[0]).1, &from, &bounds, &config.minimize_options(config.optimizer_restarts - 1))?;
        record(m, &mut best);
    }
    let best = best.expect("at least one start");
    let rho = best.x[0];
    let (tau, objective) = profile(rho);
    if !sample.iter().any(|o| o.horizon > 1.0) {
        diagnostics.notes.push("rho unidentified: no horizon above one month".into());
    }
    Ok(FitResult {
        model: ErrorModel::Ar1(Ar1Params { rho, tau2: tau * tau }),
        train_objective: objective,
        theta_profile: Vec::new(),
        diagnostics,
    })
}

/// Minimum-CRPS fit of the Gaussian model with piecewise-linear scale.
pub fn fit_gauss(sample: &[ErrorObservation], config: &FitConfig) -> Result<FitResult> {
    check_sample(sample, 1)?;
    check_not_degenerate(sample)?;
    let thetas = config.candidate_thetas()?;
    let errors: Vec<f64> = sample.iter().map(|o| o.error).collect();
    let fits: Vec<Result<(f64, f64, (GaussParams, usize))>> = thetas
        .par_iter()
        .map(|&theta| {
            let m: Vec<f64> = sample.iter().map(|o| o.horizon.min(theta)).collect();
            let start = gauss::start_values(&errors, &m);
            let sol = gauss::newton(&errors, &m, start, config.tolerance)?;
            let params = GaussParams { mu: sol.x[0], gamma0: sol.x[1], gamma1: sol.x[2], theta };
            Ok((theta, sol.value, (params, sol.iterations)))
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let iterations = fits.iter().map(|f| f.2 .1).sum();
    let (best, theta_profile, params) = select_theta(fits);
    Ok(FitResult {
        model: ErrorModel::Gauss(params[best].0),
        train_objective: theta_profile[best].objective,
        theta_profile,
        diagnostics: FitDiagnostics { iterations, ..Default::default() },
    })
}

/// Quantile regression of the errors on `min(h, theta)`, one line per level.
pub fn fit_qr(sample: &[ErrorObservation], config: &FitConfig, levels: &[f64]) -> Result<FitResult> {
    check_sample(sample, 2)?;
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no quantile levels requested".into()));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    if levels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate quantile levels".into()));
    }
    let thetas = config.candidate_thetas()?;
    let errors: Vec<f64> = sample.iter().map(|o| o.error).collect();
    let n = sample.len() as f64;
    type QrFit = (Vec<QuantileLine>, Vec<f64>);
    let fits: Vec<Result<(f64, f64, QrFit)>> = thetas
        .par_iter()
        .map(|&theta| {
            let m: Vec<f64> = sample.iter().map(|o| o.horizon.min(theta)).collect();
            let lines = levels.iter().map(|&a| fit_quantile_line(&m, &errors, a)).collect::<Result<Vec<_>>>()?;
            let total = lines.iter().map(|l| l.loss).sum::<f64>() / n;
            Ok((theta, total, (lines, m)))
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let iterations = fits.iter().map(|f| f.2 .0.iter().map(|l| l.pivots).sum::<usize>()).sum();
    let (best, theta_profile, mut per_theta) = select_theta(fits);
    let (lines, m) = per_theta.swap_remove(best);
    let theta = theta_profile[best].theta;

    let mut diagnostics = FitDiagnostics { iterations, ..Default::default() };
    if lines.iter().any(|l| !l.slope_identified) {
        diagnostics.notes.push("slope unidentified: all regressor values equal; slope set to 0".into());
    }
    let mut xs = m;
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let q: Vec<f64> = lines.iter().map(|l| l.intercept + l.slope * x).collect();
        if q.windows(2).any(|w| w[0] > w[1]) {
            diagnostics.crossing_horizons.push(x);
        }
    }
    if !diagnostics.crossing_horizons.is_empty() {
        diagnostics.notes.push(format!("quantile crossing at {} regressor values", diagnostics.crossing_horizons.len()));
    }
    let coeffs = levels
        .iter()
        .zip(&lines)
        .map(|(&level, l)| QrCoefficients { level, beta0: l.intercept, beta1: l.slope })
        .collect();
    Ok(FitResult {
        model: ErrorModel::Qr(QrParams::new(theta, coeffs)?),
        train_objective: theta_profile[best].objective,
        theta_profile,
        diagnostics,
    })
}

/// Mean CRPS of a Gaussian-type model on a sample.
pub fn mean_crps(model: &ErrorModel, sample: &[ErrorObservation]) -> Result<f64> {
    let mut total = 0.0;
    for o in sample {
        let (mu, sigma) = match model {
            ErrorModel::Ar1(p) => (0.0, crate::ar1::sigma_h_halfgrid(p, o.horizon)?),
            ErrorModel::Ar1Integer(p) => (0.0, crate::ar1::sigma_h(p, o.horizon as usize)),
            ErrorModel::Gauss(p) => (p.mu, p.sigma(o.horizon)),
            ErrorModel::Qr(_) => return Err(Error::InvalidParameter("CRPS needs a Gaussian model".into())),
        };
        total += crate::models::crps_gaussian(mu, sigma, o.error)?;
    }
    Ok(total / sample.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar1::{simulate_errors, ErrorSampleDesign};

    fn obs(h: f64, e: f64) -> ErrorObservation {
        ErrorObservation::new(format!("{h}:{e}"), 1, h, e)
    }

    #[test]
    fn default_grid() {
        let g = default_theta_grid();
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 5.0);
        assert_eq!(g[30], 20.0);
        assert!(g.contains(&12.0));
        assert_eq!(FitConfig::fixed(12.0).candidate_thetas().unwrap(), vec![12.0]);
        assert!(FitConfig::fixed(30.0).candidate_thetas().is_err());
    }

    #[test]
    fn zero_errors_are_degenerate() {
        let s = vec![obs(3.0, 0.0), obs(5.0, 0.0)];
        assert!(matches!(fit_ar1(&s, &FitConfig::default()), Err(Error::Degenerate(_))));
        assert!(matches!(fit_gauss(&s, &FitConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn off_grid_horizon_rejected() {
        let s = vec![obs(3.25, 1.0), obs(5.0, 0.5)];
        assert!(matches!(fit_ar1(&s, &FitConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn fixed_theta_has_single_profile_entry() {
        let params = Ar1Params::new(0.5, 0.1).unwrap();
        let s = simulate_errors(&params, &ErrorSampleDesign::uniform(200, 20, 3)).unwrap();
        let g = fit_gauss(&s, &FitConfig::fixed(12.0)).unwrap();
        assert_eq!(g.theta_profile.len(), 1);
        assert_eq!(g.theta(), Some(12.0));
        let q = fit_qr(&s, &FitConfig::fixed(12.0), &DEFAULT_LEVELS).unwrap();
        assert_eq!(q.theta_profile.len(), 1);
    }

    #[test]
    fn single_horizon_leaves_rho_unidentified() {
        let params = Ar1Params::new(0.0, 0.25).unwrap();
        let mut s = simulate_errors(&params, &ErrorSampleDesign { n: 2000, t_max: 200, horizon_set: vec![1], seed: 5 }).unwrap();
        s.iter_mut().for_each(|o| o.horizon = 1.0);
        let fit = fit_ar1(&s, &FitConfig::default()).unwrap();
        let ErrorModel::Ar1(p) = fit.model else { panic!() };
        assert!((p.tau2 - 0.25).abs() < 0.25 * 0.1, "tau2 = {}", p.tau2);
        assert!(fit.diagnostics.notes.iter().any(|n| n.contains("rho unidentified")));
    }

    #[test]
    fn qr_constant_horizon_flags_slope() {
        let s: Vec<_> = (0..10).map(|i| obs(7.0, i as f64)).collect();
        let fit = fit_qr(&s, &FitConfig::fixed(12.0), &[0.5]).unwrap();
        let ErrorModel::Qr(q) = &fit.model else { panic!() };
        assert_eq!(q.coeffs[0].beta1, 0.0);
        assert_eq!(q.coeffs[0].beta0, 4.0);
        assert!(fit.diagnostics.notes.iter().any(|n| n.contains("slope unidentified")));
    }

    #[test]
    fn estimated_theta_objective_is_profile_minimum() {
        let params = Ar1Params::new(0.9, 0.1).unwrap();
        let s = simulate_errors(&params, &ErrorSampleDesign::uniform(300, 20, 8)).unwrap();
        for fit in [fit_gauss(&s, &FitConfig::default()).unwrap(), fit_qr(&s, &FitConfig::default(), &DEFAULT_LEVELS).unwrap()] {
            let min = fit.theta_profile.iter().map(|p| p.objective).fold(f64::INFINITY, f64::min);
            assert_eq!(fit.train_objective, min);
            let first = fit.theta_profile.iter().find(|p| p.objective == min).unwrap();
            assert_eq!(Some(first.theta), fit.theta());
        }
    }
}
