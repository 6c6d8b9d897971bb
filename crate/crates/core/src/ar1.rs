//! Latent monthly AR(1) process behind annual fixed-event forecasts.
//!
//! Annual growth `Y_t` is the sum of twelve monthly values that follow
//! `Y_m = rho * Y_{m-1} + eps_m` with `eps_m ~ N(0, tau2)`. An optimal
//! forecast made `h` months before the end of year `t` knows every month up
//! to that point, so its error is a fixed linear combination of the shocks
//! in the last `h` months. Everything here follows from those weights.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{ErrorObservation, Error, Result};

/// Months per target year.
pub const MONTHS_PER_YEAR: usize = 12;
/// Longest horizon covered by the covariance formula and the simulator.
pub const MAX_HORIZON: usize = 24;
/// Lead months simulated ahead of the first target year.
pub const LEAD_MONTHS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    /// Persistence of monthly growth.
    pub rho: f64,
    /// Variance of the monthly shocks.
    pub tau2: f64,
}

impl Ar1Params {
    pub fn new(rho: f64, tau2: f64) -> Result<Self> {
        let p = Self { rho, tau2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau2 = {} must be positive", self.tau2)));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }
}

/// Layout of a simulated sample of forecast errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSampleDesign {
    pub n: usize,
    pub t_max: usize,
    pub horizon_set: Vec<usize>,
    pub seed: u64,
}

impl ErrorSampleDesign {
    /// `n` cases over `t_max` years with horizons drawn from `1..=24`.
    pub fn uniform(n: usize, t_max: usize, seed: u64) -> Self {
        Self { n, t_max, horizon_set: (1..=MAX_HORIZON).collect(), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("design needs n >= 1".into()));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidParameter("design needs t_max >= 1".into()));
        }
        if self.horizon_set.is_empty() {
            return Err(Error::InvalidParameter("empty horizon set".into()));
        }
        if let Some(h) = self.horizon_set.iter().find(|&&h| h == 0 || h > MAX_HORIZON) {
            return Err(Error::Domain(format!("horizon {h} outside [1, {MAX_HORIZON}]")));
        }
        Ok(())
    }
}

/// A simulated monthly path. `values[m] = rho * values[m-1] + shocks[m]`
/// for `m >= 1`; `values[0]` is a stationary draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyPath {
    pub shocks: Vec<f64>,
    pub values: Vec<f64>,
}

impl MonthlyPath {
    pub fn simulate<R: Rng + ?Sized>(params: &Ar1Params, months: usize, rng: &mut R) -> Self {
        let tau = params.tau();
        let mut shocks = Vec::with_capacity(months);
        let mut values = Vec::with_capacity(months);
        for m in 0..months {
            let eps = tau * rng.sample::<f64, _>(StandardNormal);
            let y = if m == 0 {
                eps / (1.0 - params.rho * params.rho).sqrt()
            } else {
                params.rho * values[m - 1] + eps
            };
            shocks.push(eps);
            values.push(y);
        }
        Self { shocks, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of the twelve months of the year ending at month index `year_end`
    /// (exclusive).
    pub fn annual_value(&self, year_end: usize) -> f64 {
        self.values[year_end - MONTHS_PER_YEAR..year_end].iter().sum()
    }

    /// Conditional-mean forecast of the year ending at `year_end` (exclusive)
    /// made with `h` months left, i.e. after observing month `year_end - 1 - h`.
    pub fn optimal_forecast(&self, rho: f64, year_end: usize, h: usize) -> f64 {
        let last_seen = year_end - 1 - h;
        let anchor = self.values[last_seen];
        (year_end - MONTHS_PER_YEAR..year_end)
            .map(|j| if j <= last_seen { self.values[j] } else { rho.powi((j - last_seen) as i32) * anchor })
            .sum()
    }
}

/// Lower-triangular `L x L` matrix mapping the next `L` shocks to the next
/// `L` monthly forecast errors: entry `[r, c]` is `rho^(r - c)` for `r >= c`.
pub fn accumulation_matrix(rho: f64, len: usize) -> Result<Array2<f64>> {
    if len == 0 {
        return Err(Error::EmptyDimension("accumulation matrix needs L >= 1"));
    }
    Ok(Array2::from_shape_fn((len, len), |(r, c)| if r >= c { rho.powi((r - c) as i32) } else { 0.0 }))
}

/// Weights of the reverse-time shocks (most recent first) in the annual
/// error of an optimal forecast with `h` months left.
///
/// Position `p < 12` carries `1 + rho + ... + rho^p`. Shocks that precede the
/// target year only act through its first month, so positions `p >= 12`
/// decay as `rho^(p - 11)` times the full twelve-term sum.
pub fn error_weights(rho: f64, h: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(h);
    let mut partial = 0.0;
    let mut power = 1.0;
    for p in 0..h {
        if p < MONTHS_PER_YEAR {
            partial += power;
            power *= rho;
            w.push(partial);
        } else {
            let prev = w[p - 1];
            w.push(rho * prev);
        }
    }
    w
}

/// Forecast-error standard deviation of the annual sum at integer horizon
/// `h`. Zero at `h = 0` (the year is fully observed).
pub fn sigma_h(params: &Ar1Params, h: usize) -> f64 {
    let var: f64 = error_weights(params.rho, h).iter().map(|w| w * w).sum();
    (params.tau2 * var).sqrt()
}

/// Unit-`tau` standard deviations for horizons `0..=max_h`.
pub fn unit_sigma_table(rho: f64, max_h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_h + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for w in error_weights(rho, max_h) {
        acc += w * w;
        out.push(acc.sqrt());
    }
    out
}

fn check_half_grid(h: f64) -> Result<()> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("horizon {h} must be nonnegative")));
    }
    if (2.0 * h).fract() != 0.0 {
        return Err(Error::Domain(format!("horizon {h} is not a multiple of 0.5")));
    }
    Ok(())
}

/// `sigma_h` on the half-month grid: non-integer horizons average the two
/// neighbouring integers.
pub fn sigma_h_halfgrid(params: &Ar1Params, h: f64) -> Result<f64> {
    check_half_grid(h)?;
    if h.fract() == 0.0 {
        return Ok(sigma_h(params, h as usize));
    }
    let lo = h.floor() as usize;
    Ok(0.5 * (sigma_h(params, lo) + sigma_h(params, lo + 1)))
}

/// Row vector `kappa` with `e_{t,h} = kappa . eps`, where `eps` lists the
/// `m_total` shocks in reverse time (the last month of year `t_max` first).
pub fn kappa_vector(rho: f64, t: usize, h: usize, t_max: usize, m_total: usize) -> Result<Vec<f64>> {
    if h == 0 || h > MAX_HORIZON {
        return Err(Error::Domain(format!("horizon {h} outside [1, {MAX_HORIZON}]")));
    }
    if t == 0 || t > t_max {
        return Err(Error::Domain(format!("target year {t} outside [1, {t_max}]")));
    }
    let offset = (t_max - t) * MONTHS_PER_YEAR;
    if m_total < offset + h {
        return Err(Error::Dimension(format!(
            "kappa for (t={t}, h={h}) needs {} months, got {m_total}",
            offset + h
        )));
    }
    let mut kappa = vec![0.0; m_total];
    kappa[offset..offset + h].copy_from_slice(&error_weights(rho, h));
    Ok(kappa)
}

/// Covariance of `e_{t1,h1}` and `e_{t2,h2}` (`t2 >= t1`).
///
/// Same year: `tau2 * sum_{r <= min(h1,h2)} w_r^2`. Neighbouring years with
/// `h2 >= 13`: the first `min(h1, h2 - 12)` weights of the earlier error
/// overlap the pre-year tail of the later one. Zero once `12 (t2 - t1) >= h2`.
pub fn analytic_error_covariance(rho: f64, tau2: f64, t1: i64, h1: usize, t2: i64, h2: usize) -> Result<f64> {
    for h in [h1, h2] {
        if h == 0 || h > MAX_HORIZON {
            return Err(Error::Domain(format!("horizon {h} outside [1, {MAX_HORIZON}]")));
        }
    }
    if t2 < t1 {
        return Err(Error::Domain(format!("expected t2 >= t1, got t1={t1}, t2={t2}")));
    }
    let lag = ((t2 - t1) as usize).saturating_mul(MONTHS_PER_YEAR);
    if lag >= h2 {
        return Ok(0.0);
    }
    let w1 = error_weights(rho, h1);
    let w2 = error_weights(rho, h2);
    let overlap = h1.min(h2 - lag);
    let s: f64 = (0..overlap).map(|p| w1[p] * w2[p + lag]).sum();
    Ok(tau2 * s)
}

/// Per-replication generator: ChaCha8 keyed by the master seed, one stream
/// per replication index.
pub fn replication_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws a sample of optimal-forecast errors on one simulated path covering
/// `LEAD_MONTHS` plus `t_max` years, with `(t_i, h_i)` drawn uniformly.
pub fn simulate_errors(params: &Ar1Params, design: &ErrorSampleDesign) -> Result<Vec<ErrorObservation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    simulate_errors_with_rng(params, design, &mut rng)
}

pub fn simulate_errors_with_rng<R: Rng + ?Sized>(
    params: &Ar1Params,
    design: &ErrorSampleDesign,
    rng: &mut R,
) -> Result<Vec<ErrorObservation>> {
    params.validate()?;
    design.validate()?;
    let months = LEAD_MONTHS + design.t_max * MONTHS_PER_YEAR;
    let path = MonthlyPath::simulate(params, months, rng);
    let mut out = Vec::with_capacity(design.n);
    for i in 0..design.n {
        let t = rng.random_range(1..=design.t_max);
        let h = design.horizon_set[rng.random_range(0..design.horizon_set.len())];
        let year_end = LEAD_MONTHS + t * MONTHS_PER_YEAR;
        let realization = path.annual_value(year_end);
        let forecast = path.optimal_forecast(params.rho, year_end, h);
        out.push(ErrorObservation {
            case_id: format!("s{i:04}"),
            target_year: t as i32,
            horizon: h as f64,
            error: realization - forecast,
            point_forecast: Some(forecast),
            realization: Some(realization),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(rho: f64, tau2: f64) -> Ar1Params {
        Ar1Params::new(rho, tau2).unwrap()
    }

    #[test]
    fn accumulation_matrix_entries() {
        let a = accumulation_matrix(0.5, 2).unwrap();
        assert_eq!(a, ndarray::arr2(&[[1.0, 0.0], [0.5, 1.0]]));
        assert_eq!(accumulation_matrix(0.0, 3).unwrap(), Array2::<f64>::eye(3));
        let a = accumulation_matrix(0.9, 3).unwrap();
        assert!((a[[2, 0]] - 0.81).abs() < 1e-15);
        assert_eq!(a[[2, 1]], 0.9);
        assert_eq!(a[[2, 2]], 1.0);
        assert_eq!(accumulation_matrix(0.5, 0), Err(Error::EmptyDimension("accumulation matrix needs L >= 1")));
    }

    #[test]
    fn sigma_levels_off_for_iid_months() {
        let params = p(0.0, 0.1);
        assert!((sigma_h(&params, 12) - 1.2f64.sqrt()).abs() < 1e-15);
        assert!((sigma_h(&params, 24) - 1.2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sigma_h(&params, 0), 0.0);
    }

    #[test]
    fn half_grid_averages_neighbours() {
        let params = p(0.0, 0.1);
        let got = sigma_h_halfgrid(&params, 11.5).unwrap();
        assert!((got - 1.072126981590242).abs() < 1e-14);
        let q = p(0.7, 0.3);
        assert_eq!(sigma_h_halfgrid(&q, 4.0).unwrap(), sigma_h(&q, 4));
        let r = p(0.5, 0.1);
        assert_eq!(sigma_h_halfgrid(&r, 0.5).unwrap(), sigma_h(&r, 1) / 2.0);
        assert!(matches!(sigma_h_halfgrid(&r, -0.5), Err(Error::Domain(_))));
        assert!(matches!(sigma_h_halfgrid(&r, 1.25), Err(Error::Domain(_))));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_vector(0.5, 3, 2, 3, 2).unwrap(), vec![1.0, 1.5]);
        let k = kappa_vector(0.0, 2, 3, 4, 40).unwrap();
        let ones: Vec<usize> = k.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(ones, vec![24, 25, 26]);
        assert!(k.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(matches!(kappa_vector(0.5, 1, 12, 3, 30), Err(Error::Dimension(_))));
        assert!(matches!(kappa_vector(0.5, 1, 25, 3, 100), Err(Error::Domain(_))));
    }

    #[test]
    fn covariance_cases() {
        assert_eq!(analytic_error_covariance(0.9, 0.1, 3, 24, 5, 24).unwrap(), 0.0);
        assert_eq!(analytic_error_covariance(0.9, 0.1, 3, 5, 4, 12).unwrap(), 0.0);
        let c = analytic_error_covariance(0.0, 0.1, 1, 12, 1, 12).unwrap();
        assert!((c - 1.2).abs() < 1e-15);
        assert!(matches!(analytic_error_covariance(0.5, 0.1, 1, 0, 1, 3), Err(Error::Domain(_))));
        assert!(matches!(analytic_error_covariance(0.5, 0.1, 2, 3, 1, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn covariance_diagonal_is_sigma_squared() {
        let params = p(0.5, 0.2);
        for h in 1..=24 {
            let c = analytic_error_covariance(params.rho, params.tau2, 7, h, 7, h).unwrap();
            assert!((c - sigma_h(&params, h).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_errors_respects_design() {
        let params = p(0.5, 0.1);
        let design = ErrorSampleDesign::uniform(300, 20, 11);
        let sample = simulate_errors(&params, &design).unwrap();
        assert_eq!(sample.len(), 300);
        assert!(sample.iter().all(|o| (1..=20).contains(&o.target_year)));
        assert!(sample.iter().all(|o| o.horizon >= 1.0 && o.horizon <= 24.0 && o.horizon.fract() == 0.0));
        assert_eq!(sample, simulate_errors(&params, &design).unwrap());
        for o in &sample {
            assert!((o.error - (o.realization.unwrap() - o.point_forecast.unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(Ar1Params::new(1.0, 0.1).is_err());
        assert!(Ar1Params::new(-0.1, 0.1).is_err());
        assert!(Ar1Params::new(0.5, 0.0).is_err());
        let bad = ErrorSampleDesign { n: 10, t_max: 2, horizon_set: vec![0, 3], seed: 1 };
        assert!(bad.validate().is_err());
    }
}
