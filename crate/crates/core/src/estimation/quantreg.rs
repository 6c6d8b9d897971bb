//! Exact quantile regression of `y` on an intercept and one regressor.
//!
//! The tick-loss objective is convex and piecewise linear, so an optimum is
//! attained by a line through two observations. The solver walks between
//! such lines: anchored at one observation, the best slope is a weighted
//! quantile of the slopes to all other observations; the partner found there
//! becomes the next anchor. When no anchor on the current line improves the
//! loss, the line is optimal.

use crate::models::tick_loss;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLine {
    pub intercept: f64,
    pub slope: f64,
    /// Sum of tick losses.
    pub loss: f64,
    /// False when every regressor value is equal and the slope is fixed at 0.
    pub slope_identified: bool,
    pub pivots: usize,
}

/// Index (0-based) of the empirical `alpha`-quantile in sorted order:
/// the `ceil(n * alpha)`-th smallest value.
pub fn empirical_quantile_rank(n: usize, alpha: f64) -> usize {
    let k = (n as f64 * alpha - 1e-9).ceil() as usize;
    k.clamp(1, n) - 1
}

/// The `ceil(n * alpha)`-th smallest value, which minimizes the summed tick
/// loss over constants.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDimension("empirical quantile of an empty sample"));
    }
    let mut v = values.to_vec();
    let k = empirical_quantile_rank(v.len(), alpha);
    let (_, q, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    Ok(*q)
}

fn total_loss(x: &[f64], y: &[f64], alpha: f64, intercept: f64, slope: f64) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| tick_loss(alpha, intercept + slope * xi, yi)).sum()
}

/// Best line through observation `anchor`; returns the partner observation
/// and the slope.
fn best_through(x: &[f64], y: &[f64], alpha: f64, anchor: usize, scratch: &mut Vec<(f64, f64, usize)>) -> Option<(usize, f64)> {
    scratch.clear();
    let (xa, ya) = (x[anchor], y[anchor]);
    let mut deriv = 0.0;
    for k in 0..x.len() {
        let b = x[k] - xa;
        if b == 0.0 {
            continue;
        }
        let slope = (y[k] - ya) / b;
        let w = b.abs();
        let a = if b > 0.0 { alpha } else { 1.0 - alpha };
        deriv -= a * w;
        scratch.push((slope, w, k));
    }
    if scratch.is_empty() {
        return None;
    }
    // the derivative in the slope rises by w_k at each breakpoint; find the
    // first breakpoint, in (slope, index) order, where it turns nonnegative
    let by_slope = |p: &(f64, f64, usize), q: &(f64, f64, usize)| p.0.total_cmp(&q.0).then(p.2.cmp(&q.2));
    let mut need = -deriv;
    let mut items = &mut scratch[..];
    loop {
        if items.len() == 1 {
            return Some((items[0].2, items[0].0));
        }
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, by_slope);
        let below: f64 = items[..mid].iter().map(|p| p.1).sum();
        if below >= need {
            items = &mut items[..mid];
        } else if below + items[mid].1 >= need || mid + 1 == items.len() {
            return Some((items[mid].2, items[mid].0));
        } else {
            need -= below + items[mid].1;
            items = &mut items[mid + 1..];
        }
    }
}

pub fn fit_quantile_line(x: &[f64], y: &[f64], alpha: f64) -> Result<QuantileLine> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("x has {} entries, y {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptyDimension("quantile regression on an empty sample"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("level {alpha} outside (0, 1)")));
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let start = order[empirical_quantile_rank(n, alpha)];

    if x.iter().all(|&v| v == x[0]) {
        let intercept = y[start];
        return Ok(QuantileLine {
            intercept,
            slope: 0.0,
            loss: total_loss(x, y, alpha, intercept, 0.0),
            slope_identified: false,
            pivots: 0,
        });
    }

    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let improve_tol = 1e-12 * scale * n as f64;
    let line_through = |anchor: usize, slope: f64| (y[anchor] - slope * x[anchor], slope);
    let mut scratch = Vec::with_capacity(n);

    let mut anchor = start;
    let (mut b0, mut b1) = (y[start], 0.0);
    let mut best = total_loss(x, y, alpha, b0, b1);
    let mut pivots = 0;
    let max_pivots = 20 * n + 20;
    loop {
        // rotate around the current anchor until no improvement
        let mut improved = false;
        if let Some((partner, slope)) = best_through(x, y, alpha, anchor, &mut scratch) {
            let (c0, c1) = line_through(anchor, slope);
            let loss = total_loss(x, y, alpha, c0, c1);
            if loss < best - improve_tol {
                best = loss;
                b0 = c0;
                b1 = c1;
                anchor = partner;
                improved = true;
            }
        }
        pivots += 1;
        if pivots > max_pivots {
            break;
        }
        if improved {
            continue;
        }
        // optimality check: rotations around every observation on the line
        let on_line: Vec<usize> = (0..n)
            .filter(|&i| (y[i] - b0 - b1 * x[i]).abs() <= 1e-10 * (1.0 + y[i].abs()))
            .collect();
        let mut moved = false;
        for &i in &on_line {
            if let Some((partner, slope)) = best_through(x, y, alpha, i, &mut scratch) {
                let (c0, c1) = line_through(i, slope);
                let loss = total_loss(x, y, alpha, c0, c1);
                if loss < best - improve_tol {
                    best = loss;
                    b0 = c0;
                    b1 = c1;
                    anchor = partner;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Ok(QuantileLine { intercept: b0, slope: b1, loss: best, slope_identified: true, pivots })
}
