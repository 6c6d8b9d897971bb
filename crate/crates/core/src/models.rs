//! Horizon-dependent error models and the losses they are scored with.

use serde::{Deserialize, Serialize};

use crate::ar1::{sigma_h, sigma_h_halfgrid, Ar1Params};
use crate::normal;
use crate::{Error, Result};

/// Allowed range for the leveling horizon of the piecewise-linear models.
pub const THETA_RANGE: (f64, f64) = (5.0, 20.0);
/// Tolerance used when looking up a quantile level in fitted coefficients.
const LEVEL_TOL: f64 = 1e-9;

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level {alpha} outside (0, 1)")))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (THETA_RANGE.0..=THETA_RANGE.1).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "theta = {theta} outside [{}, {}]",
            THETA_RANGE.0, THETA_RANGE.1
        )))
    }
}

/// Gaussian errors with mean `mu` and standard deviation
/// `gamma0 + gamma1 * min(h, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    pub mu: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub theta: f64,
}

impl GaussParams {
    pub fn sigma(&self, h: f64) -> f64 {
        self.gamma0 + self.gamma1 * h.min(self.theta)
    }

    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)
    }
}

/// Per-level coefficients of a quantile regression on `min(h, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrCoefficients {
    pub level: f64,
    pub beta0: f64,
    pub beta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrParams {
    pub theta: f64,
    /// Sorted by strictly increasing level.
    pub coeffs: Vec<QrCoefficients>,
}

impl QrParams {
    pub fn new(theta: f64, coeffs: Vec<QrCoefficients>) -> Result<Self> {
        let q = Self { theta, coeffs };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        for c in &self.coeffs {
            check_level(c.level)?;
        }
        if self.coeffs.windows(2).any(|w| w[0].level >= w[1].level) {
            return Err(Error::InvalidParameter("quantile levels must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.level).collect()
    }

    pub fn coefficients(&self, alpha: f64) -> Result<&QrCoefficients> {
        self.coeffs
            .iter()
            .find(|c| (c.level - alpha).abs() < LEVEL_TOL)
            .ok_or(Error::MissingCoefficient(alpha))
    }
}

/// `z_alpha * sigma(h; rho, tau2)`, averaging neighbouring integer horizons
/// on the half-month grid.
pub fn ar1_quantile(params: &Ar1Params, h: f64, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    let sigma = sigma_h_halfgrid(params, h)?;
    Ok(normal::quantile(alpha)? * sigma)
}

pub fn gauss_quantile(params: &GaussParams, h: f64, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    let sigma = params.sigma(h);
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("implied sigma {sigma} at h = {h} is not positive")));
    }
    Ok(params.mu + normal::quantile(alpha)? * sigma)
}

pub fn qr_quantile(params: &QrParams, h: f64, alpha: f64) -> Result<f64> {
    let c = params.coefficients(alpha)?;
    Ok(c.beta0 + c.beta1 * h.min(params.theta))
}

/// A fitted (or fixed) error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ErrorModel {
    Ar1(Ar1Params),
    /// AR(1) model evaluated at integer horizons only, without half-grid
    /// averaging.
    Ar1Integer(Ar1Params),
    Gauss(GaussParams),
    Qr(QrParams),
}

impl ErrorModel {
    pub fn quantile(&self, h: f64, alpha: f64) -> Result<f64> {
        match self {
            ErrorModel::Ar1(p) => ar1_quantile(p, h, alpha),
            ErrorModel::Ar1Integer(p) => {
                check_level(alpha)?;
                if !(h >= 0.0) || h.fract() != 0.0 {
                    return Err(Error::Domain(format!("integer-horizon model got h = {h}")));
                }
                Ok(normal::quantile(alpha)? * sigma_h(p, h as usize))
            }
            ErrorModel::Gauss(p) => gauss_quantile(p, h, alpha),
            ErrorModel::Qr(p) => qr_quantile(p, h, alpha),
        }
    }

    /// Central interval at `nominal_level`. Crossed quantiles are swapped and
    /// flagged.
    pub fn central_interval(&self, h: f64, nominal_level: f64) -> Result<IntervalForecast> {
        check_level(nominal_level)?;
        let lo = self.quantile(h, (1.0 - nominal_level) / 2.0)?;
        let hi = self.quantile(h, (1.0 + nominal_level) / 2.0)?;
        let crossed = lo > hi;
        let (lower, upper) = if crossed { (hi, lo) } else { (lo, hi) };
        Ok(IntervalForecast { lower, upper, nominal_level, crossed })
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            ErrorModel::Gauss(p) => Some(p.theta),
            ErrorModel::Qr(p) => Some(p.theta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalForecast {
    pub lower: f64,
    pub upper: f64,
    pub nominal_level: f64,
    /// Set when the raw lower quantile exceeded the raw upper one.
    #[serde(default)]
    pub crossed: bool,
}

impl IntervalForecast {
    pub fn new(lower: f64, upper: f64, nominal_level: f64) -> Result<Self> {
        if lower > upper {
            return Err(Error::Domain(format!("interval lower {lower} exceeds upper {upper}")));
        }
        check_level(nominal_level)?;
        Ok(Self { lower, upper, nominal_level, crossed: false })
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// CRPS of `N(mu, sigma^2)` at `y`; the absolute error when `sigma = 0`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("sigma = {sigma} is negative")));
    }
    if sigma == 0.0 {
        return Ok((y - mu).abs());
    }
    Ok(crps_gaussian_unchecked(mu, sigma, y))
}

#[inline]
pub(crate) fn crps_gaussian_unchecked(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * normal::cdf(z) - 1.0) + 2.0 * normal::pdf(z) - normal::FRAC_1_SQRT_PI)
}

/// Pinball loss `(y - q) * (alpha - 1{y < q})`.
#[inline]
pub fn tick_loss(alpha: f64, q: f64, y: f64) -> f64 {
    let u = y - q;
    if u < 0.0 {
        u * (alpha - 1.0)
    } else {
        u * alpha
    }
}
