//! The error representation against errors computed directly from a path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fixedevent::ar1::{
    analytic_error_covariance, kappa_vector, simulate_errors, Ar1Params, ErrorSampleDesign, MonthlyPath, LEAD_MONTHS,
    MONTHS_PER_YEAR,
};

#[test]
fn kappa_times_shocks_reproduces_simulated_errors() {
    let params = Ar1Params::new(0.8, 0.1).unwrap();
    let design = ErrorSampleDesign::uniform(300, 20, 42);
    let sample = simulate_errors(&params, &design).unwrap();
    // simulate_errors draws the path first from the same seeded stream
    let months = LEAD_MONTHS + design.t_max * MONTHS_PER_YEAR;
    let path = MonthlyPath::simulate(&params, months, &mut ChaCha8Rng::seed_from_u64(design.seed));
    let reversed: Vec<f64> = path.shocks.iter().rev().copied().collect();
    for obs in &sample {
        let kappa =
            kappa_vector(params.rho, obs.target_year as usize, obs.horizon as usize, design.t_max, months).unwrap();
        let e: f64 = kappa.iter().zip(&reversed).map(|(k, s)| k * s).sum();
        assert!((e - obs.error).abs() < 1e-12, "{}: {e} vs {}", obs.case_id, obs.error);
    }
}

#[test]
fn simulated_sample_shape_and_determinism() {
    let params = Ar1Params::new(0.5, 0.1).unwrap();
    let design = ErrorSampleDesign::uniform(300, 20, 1);
    let a = simulate_errors(&params, &design).unwrap();
    assert_eq!(a.len(), 300);
    assert!(a.iter().all(|o| (1..=20).contains(&o.target_year) && (1.0..=24.0).contains(&o.horizon)));
    assert_eq!(a, simulate_errors(&params, &design).unwrap());
}

#[test]
fn errors_two_years_apart_are_uncorrelated() {
    let params = Ar1Params::new(0.9, 0.1).unwrap();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let year_end = |t: usize| LEAD_MONTHS + MONTHS_PER_YEAR * t;
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let path = MonthlyPath::simulate(&params, LEAD_MONTHS + 36, &mut rng);
        let err = |t: usize, h: usize| path.annual_value(year_end(t)) - path.optimal_forecast(params.rho, year_end(t), h);
        a.push(err(1, 1));
        b.push(err(3, 24));
    }
    let nf = n as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / nf, b.iter().sum::<f64>() / nf);
    let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let cov = prods.iter().sum::<f64>() / nf;
    let se = (prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt() / nf.sqrt();
    assert_eq!(analytic_error_covariance(params.rho, params.tau2, 1, 1, 3, 24).unwrap(), 0.0);
    assert!(cov.abs() < 3.0 * se, "cov {cov}, se {se}");
}
