//! Minimum-CRPS fit of `N(mu, (gamma0 + gamma1 m_i)^2)` for fixed regressors
//! `m_i = min(h_i, theta)`.
//!
//! The Gaussian CRPS is jointly convex in location and scale, and the scale
//! is affine in `(gamma0, gamma1)`, so the objective is convex. Projected
//! Newton with backtracking handles the bounds `gamma0 >= 1e-6`,
//! `gamma1 >= 0`.

use crate::models::crps_gaussian_unchecked;
use crate::normal;
use crate::{Error, Result};

use super::SIGMA_FLOOR;

pub(crate) struct Solution {
    pub x: [f64; 3],
    pub value: f64,
    pub iterations: usize,
}

const LOWER: [f64; 3] = [f64::NEG_INFINITY, SIGMA_FLOOR, 0.0];

/// Mean error, and a least-squares line through `|e_i - mean| * sqrt(pi/2)`
/// on `m_i` for the scale.
pub(crate) fn start_values(errors: &[f64], m: &[f64]) -> [f64; 3] {
    let n = errors.len() as f64;
    let mu = errors.iter().sum::<f64>() / n;
    let a: Vec<f64> = errors.iter().map(|e| (e - mu).abs() * std::f64::consts::FRAC_PI_2.sqrt()).collect();
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_m = m.iter().sum::<f64>() / n;
    let sxx: f64 = m.iter().map(|x| (x - mean_m).powi(2)).sum();
    let sxy: f64 = m.iter().zip(&a).map(|(x, y)| (x - mean_m) * (y - mean_a)).sum();
    let (mut g0, mut g1) = if sxx > 0.0 {
        let slope = sxy / sxx;
        (mean_a - slope * mean_m, slope)
    } else {
        (mean_a, 0.0)
    };
    if g1 < 0.0 {
        g1 = 0.0;
        g0 = mean_a;
    }
    if g0 < SIGMA_FLOOR {
        // keep the fitted scale at the mean regressor value
        g0 = SIGMA_FLOOR;
        if mean_m > 0.0 {
            g1 = ((mean_a - g0) / mean_m).max(0.0);
        }
    }
    [mu, g0, g1]
}

pub(crate) fn objective(errors: &[f64], m: &[f64], x: &[f64; 3]) -> f64 {
    let n = errors.len() as f64;
    errors.iter().zip(m).map(|(&e, &mi)| crps_gaussian_unchecked(x[0], x[1] + x[2] * mi, e)).sum::<f64>() / n
}

fn gradient_hessian(errors: &[f64], m: &[f64], x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = errors.len() as f64;
    let mut g = [0.0; 3];
    let mut h = [[0.0; 3]; 3];
    for (&e, &mi) in errors.iter().zip(m) {
        let sigma = x[1] + x[2] * mi;
        let z = (e - x[0]) / sigma;
        let phi = normal::pdf(z);
        let d_mu = 1.0 - 2.0 * normal::cdf(z);
        let d_sigma = 2.0 * phi - normal::FRAC_1_SQRT_PI;
        // d sigma / d(gamma0, gamma1) = (1, m_i)
        let grad = [d_mu, d_sigma, d_sigma * mi];
        for k in 0..3 {
            g[k] += grad[k];
        }
        // Hessian in (mu, sigma) is (2 phi / sigma) [1 z; z z^2]
        let c = 2.0 * phi / sigma;
        let v = [1.0, z, z * mi];
        for r in 0..3 {
            for col in 0..3 {
                h[r][col] += c * v[r] * v[col];
            }
        }
    }
    for k in 0..3 {
        g[k] /= n;
        for col in 0..3 {
            h[k][col] /= n;
        }
    }
    (g, h)
}

/// Solves `A d = b` on the index set `free` by Gaussian elimination with
/// partial pivoting. Returns `None` for a singular system.
fn solve_free(a: &[[f64; 3]; 3], b: &[f64; 3], free: &[usize]) -> Option<[f64; 3]> {
    let k = free.len();
    let mut m = [[0.0; 4]; 3];
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            m[r][c] = a[i][j];
        }
        m[r][k] = b[i];
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            for c in col..=k {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut sol = [0.0; 3];
    for r in (0..k).rev() {
        let mut s = m[r][k];
        for c in r + 1..k {
            s -= m[r][c] * sol[c];
        }
        sol[r] = s / m[r][r];
    }
    let mut out = [0.0; 3];
    for (r, &i) in free.iter().enumerate() {
        out[i] = sol[r];
    }
    Some(out)
}

pub(crate) fn newton(errors: &[f64], m: &[f64], start: [f64; 3], tolerance: f64) -> Result<Solution> {
    let mut x = start;
    for k in 1..3 {
        x[k] = x[k].max(LOWER[k]);
    }
    let mut f = objective(errors, m, &x);
    if !f.is_finite() {
        return Err(Error::Optimization("Gaussian CRPS objective not finite at the start".into()));
    }
    let mut iterations = 0;
    for _ in 0..200 {
        iterations += 1;
        let (g, mut h) = gradient_hessian(errors, m, &x);
        // coordinates pinned at their lower bound with an outward gradient
        let free: Vec<usize> = (0..3).filter(|&k| !(x[k] <= LOWER[k] && g[k] > 0.0)).collect();
        let pg = free.iter().map(|&k| g[k].abs()).fold(0.0, f64::max);
        if free.is_empty() || pg <= 1e-12 {
            break;
        }
        let ridge = 1e-10 * (h[0][0] + h[1][1] + h[2][2]).max(1e-300);
        for (k, row) in h.iter_mut().enumerate() {
            row[k] += ridge;
        }
        let neg_g = [-g[0], -g[1], -g[2]];
        let mut d = solve_free(&h, &neg_g, &free).unwrap_or(neg_g);
        if free.iter().map(|&k| d[k] * g[k]).sum::<f64>() >= 0.0 {
            d = [0.0; 3];
            for &k in &free {
                d[k] = -g[k];
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let mut trial = [x[0] + t * d[0], x[1] + t * d[1], x[2] + t * d[2]];
            for k in 1..3 {
                trial[k] = trial[k].max(LOWER[k]);
            }
            let ft = objective(errors, m, &trial);
            let decrease: f64 = (0..3).map(|k| g[k] * (trial[k] - x[k])).sum();
            if ft.is_finite() && ft <= f + 1e-4 * decrease {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        let gain = f - ft;
        x = trial;
        f = ft;
        if gain <= tolerance * 1e-6 * (1.0 + f.abs()) {
            break;
        }
    }
    Ok(Solution { x, value: f, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{minimize, Bounds, MinimizeOptions};

    fn sample() -> (Vec<f64>, Vec<f64>) {
        // deterministic pseudo-data with scale growing in m
        let m: Vec<f64> = (0..120).map(|i| (i % 24) as f64 * 0.5).collect();
        let e: Vec<f64> = (0..120)
            .map(|i| {
                let u = ((i * 7919 % 1000) as f64 + 0.5) / 1000.0;
                let z = crate::normal::quantile(u).unwrap();
                0.2 + (0.3 + 0.08 * m[i]) * z
            })
            .collect();
        (e, m)
    }

    #[test]
    fn newton_agrees_with_simplex_search() {
        let (e, m) = sample();
        let start = start_values(&e, &m);
        let sol = newton(&e, &m, start, 1e-8).unwrap();
        let bounds = Bounds::new(vec![f64::NEG_INFINITY, SIGMA_FLOOR, 0.0], vec![f64::INFINITY; 3]).unwrap();
        let nm = minimize(
            |x| objective(&e, &m, &[x[0], x[1], x[2]]),
            &start,
            &bounds,
            &MinimizeOptions { tolerance: 1e-12, x_tolerance: 1e-9, ..Default::default() },
        )
        .unwrap();
        assert!(sol.value <= nm.value + 1e-10, "newton {} vs simplex {}", sol.value, nm.value);
        assert!((sol.value - nm.value).abs() < 1e-7);
        for k in 0..3 {
            assert!((sol.x[k] - nm.x[k]).abs() < 1e-3, "{:?} vs {:?}", sol.x, nm.x);
        }
    }

    #[test]
    fn slope_bound_is_respected() {
        // scale shrinking in m pushes gamma1 to its bound
        let m: Vec<f64> = (0..100).map(|i| (i % 10) as f64).collect();
        let e: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (3.0 - 0.25 * m[i])).collect();
        let sol = newton(&e, &m, start_values(&e, &m), 1e-8).unwrap();
        assert_eq!(sol.x[2], 0.0);
        assert!(sol.x[1] >= SIGMA_FLOOR);
    }

    #[test]
    fn start_values_positive_scale() {
        let (e, m) = sample();
        let s = start_values(&e, &m);
        assert!(s[1] >= SIGMA_FLOOR && s[2] >= 0.0);
        let flat = start_values(&[1.0, -1.0, 2.0], &[4.0, 4.0, 4.0]);
        assert_eq!(flat[2], 0.0);
    }
}
