//! Box-constrained Nelder-Mead with perturbed restarts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("bounds have different lengths".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("lower bound above upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    /// Additional runs from perturbations of the incumbent.
    pub restarts: usize,
    /// Convergence threshold on the spread of simplex objective values.
    pub tolerance: f64,
    /// Convergence threshold on the simplex diameter, relative to `1 + |x|`.
    pub x_tolerance: f64,
    /// Evaluation budget per run.
    pub max_evals: usize,
    /// Initial simplex edge, relative to `max(|x_i|, 1)`.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { restarts: 5, tolerance: 1e-8, x_tolerance: 1e-6, max_evals: 2000, initial_step: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value reached by each run, initial run first.
    pub run_values: Vec<f64>,
}

struct Counter<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Derivative-free minimization of `objective` within `bounds`.
///
/// Trial points are projected onto the box. The returned point is never worse
/// than `start`.
pub fn minimize<F>(objective: F, start: &[f64], bounds: &Bounds, opts: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    if start.is_empty() {
        return Err(Error::EmptyDimension("minimize needs at least one parameter"));
    }
    if start.len() != bounds.dim() {
        return Err(Error::Dimension(format!("start has {} entries, bounds {}", start.len(), bounds.dim())));
    }
    let mut f = Counter { f: objective, evals: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut x0 = start.to_vec();
    bounds.project(&mut x0);
    let f0 = f.eval(&x0);
    let (mut best_x, mut best_f) = (x0.clone(), f0);
    let mut run_values = Vec::with_capacity(opts.restarts + 1);

    let mut any_finite = f0.is_finite();
    for run in 0..=opts.restarts {
        let mut s = if run == 0 {
            x0.clone()
        } else {
            let mut s: Vec<f64> = best_x
                .iter()
                .map(|&v| v + opts.initial_step * v.abs().max(1.0) * rng.random_range(-1.0..1.0))
                .collect();
            bounds.project(&mut s);
            s
        };
        if run > 0 && !f.eval(&s).is_finite() {
            // a perturbed start outside the finite region is retried from the incumbent
            s = best_x.clone();
        }
        let (x, v) = nelder_mead(&mut f, &s, bounds, opts);
        any_finite |= v.is_finite();
        run_values.push(v);
        if v < best_f {
            best_f = v;
            best_x = x;
        }
    }
    if !any_finite || !best_f.is_finite() {
        return Err(Error::Optimization("objective is not finite at any start".into()));
    }
    Ok(Minimum { x: best_x, value: best_f, evaluations: f.evals, run_values })
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut Counter<F>,
    start: &[f64],
    bounds: &Bounds,
    opts: &MinimizeOptions,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let budget_end = f.evals + opts.max_evals;
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        let step = opts.initial_step * start[i].abs().max(1.0);
        v[i] += step;
        if v[i] > bounds.upper[i] {
            v[i] = start[i] - step;
        }
        bounds.project(&mut v);
        if v[i] == start[i] {
            // box is degenerate in this coordinate
            v[i] = bounds.lower[i];
        }
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f.eval(v)).collect();

    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (ib, iw, isw) = (order[0], order[n], order[n - 1]);
        let spread = values[iw] - values[ib];
        let diameter = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[ib]).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())))
            .fold(0.0, f64::max);
        let flat = spread <= opts.tolerance || (values[ib].is_infinite() && values[iw].is_infinite());
        if (flat && diameter <= opts.x_tolerance) || f.evals >= budget_end {
            return (simplex[ib].clone(), values[ib]);
        }

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }
        let towards = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[iw]).map(|(c, w)| c + coef * (c - w)).collect();
            bounds.project(&mut p);
            p
        };

        let xr = towards(1.0);
        let fr = f.eval(&xr);
        if fr < values[ib] {
            let xe = towards(2.0);
            let fe = f.eval(&xe);
            if fe < fr {
                simplex[iw] = xe;
                values[iw] = fe;
            } else {
                simplex[iw] = xr;
                values[iw] = fr;
            }
            continue;
        }
        if fr < values[isw] {
            simplex[iw] = xr;
            values[iw] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[iw] {
            let xc = towards(0.5);
            let fc = f.eval(&xc);
            (xc, fc)
        } else {
            let xc = towards(-0.5);
            let fc = f.eval(&xc);
            (xc, fc)
        };
        if fc < values[iw].min(fr) {
            simplex[iw] = xc;
            values[iw] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[ib].clone();
        for i in 0..=n {
            if i == ib {
                continue;
            }
            for (v, b) in simplex[i].iter_mut().zip(&best) {
                *v = b + 0.5 * (*v - b);
            }
            values[i] = f.eval(&simplex[i]);
        }
    }
}
