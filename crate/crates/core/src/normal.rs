//! Standard normal helpers shared by the Gaussian models and scores.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::{Error, Result};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[inline]
pub fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// The `alpha`-quantile of the standard normal distribution.
pub fn quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("quantile level {alpha} outside (0, 1)")));
    }
    if alpha == 0.5 {
        return Ok(0.0);
    }
    // symmetric evaluation keeps q(a) = -q(1 - a) exact
    let std = Normal::standard();
    if alpha < 0.5 {
        Ok(-std.inverse_cdf(1.0 - alpha))
    } else {
        Ok(std.inverse_cdf(alpha))
    }
}
