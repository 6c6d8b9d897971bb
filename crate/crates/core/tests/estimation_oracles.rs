//! Generate-and-refit checks for the three fitting routines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fixedevent::ar1::{simulate_errors, Ar1Params, ErrorSampleDesign};
use fixedevent::estimation::{fit_ar1, fit_gauss, fit_qr, mean_crps, FitConfig};
use fixedevent::models::{ErrorModel, GaussParams};
use fixedevent::ErrorObservation;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn quick() -> FitConfig {
    FitConfig { optimizer_restarts: 0, ..FitConfig::default() }
}

/// `e ~ N(mu, (g0 + g1 min(h, theta))^2)` at horizons drawn from `0, 0.5, ..., 24`.
fn gauss_sample(p: &GaussParams, n: usize, seed: u64) -> Vec<ErrorObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let h = 0.5 * rng.random_range(0..=48) as f64;
            let z: f64 = rng.sample(StandardNormal);
            ErrorObservation::new(format!("g{i}"), 1 + (i % 20) as i32, h, p.mu + p.sigma(h) * z)
        })
        .collect()
}

#[test]
fn ar1_recovers_parameters() {
    let params = Ar1Params::new(0.5, 0.1).unwrap();
    let (mut rhos, mut taus) = (Vec::new(), Vec::new());
    for r in 0..100 {
        let sample = simulate_errors(&params, &ErrorSampleDesign::uniform(600, 40, 1000 + r)).unwrap();
        let fit = fit_ar1(&sample, &quick()).unwrap();
        let ErrorModel::Ar1(p) = fit.model else { panic!("expected AR(1) model") };
        rhos.push(p.rho);
        taus.push(p.tau2);
    }
    let (rho, tau2) = (median(rhos), median(taus));
    assert!((rho - 0.5).abs() <= 0.15, "median rho {rho}");
    assert!((tau2 / 0.1 - 1.0).abs() <= 0.3, "median tau2 {tau2}");
}

#[test]
fn ar1_fit_is_deterministic() {
    let params = Ar1Params::new(0.7, 0.1).unwrap();
    let sample = simulate_errors(&params, &ErrorSampleDesign::uniform(200, 20, 3)).unwrap();
    let config = FitConfig { seed: 11, ..FitConfig::default() };
    assert_eq!(fit_ar1(&sample, &config).unwrap(), fit_ar1(&sample, &config).unwrap());
}

#[test]
fn gauss_homoscedastic_data() {
    let truth = GaussParams { mu: 0.3, gamma0: 1.0, gamma1: 0.0, theta: 12.0 };
    let sample = gauss_sample(&truth, 600, 17);
    let fit = fit_gauss(&sample, &FitConfig::fixed(12.0)).unwrap();
    let ErrorModel::Gauss(p) = fit.model else { panic!("expected Gaussian model") };
    // standard errors at n = 600 are about 0.04 for the mean and a few
    // hundredths per month for the slope
    assert!((p.mu - 0.3).abs() < 0.15, "mu {}", p.mu);
    assert!(p.gamma1.abs() < 0.03, "gamma1 {}", p.gamma1);
    assert!((p.sigma(6.0) - 1.0).abs() < 0.15);
}

#[test]
fn gauss_refit_matches_true_crps() {
    let truth = GaussParams { mu: 0.0, gamma0: 0.2, gamma1: 0.1, theta: 12.0 };
    let sample = gauss_sample(&truth, 600, 23);
    let fit = fit_gauss(&sample, &FitConfig::default()).unwrap();
    let true_crps = mean_crps(&ErrorModel::Gauss(truth), &sample).unwrap();
    let rel = (fit.train_objective - true_crps).abs() / true_crps;
    assert!(rel < 0.05, "fitted {} vs true {}", fit.train_objective, true_crps);
    let theta = fit.theta().unwrap();
    assert!((5.0..=20.0).contains(&theta));
}

#[test]
fn estimated_theta_never_worse_than_fixed() {
    let params = Ar1Params::new(0.9, 0.1).unwrap();
    for seed in 0..5 {
        let sample = simulate_errors(&params, &ErrorSampleDesign::uniform(300, 20, seed)).unwrap();
        let est = fit_gauss(&sample, &FitConfig::default()).unwrap();
        let fixed = fit_gauss(&sample, &FitConfig::fixed(12.0)).unwrap();
        assert!(est.train_objective <= fixed.train_objective + 1e-12);
        let est = fit_qr(&sample, &FitConfig::default(), &[0.1, 0.9]).unwrap();
        let fixed = fit_qr(&sample, &FitConfig::fixed(12.0), &[0.1, 0.9]).unwrap();
        assert!(est.train_objective <= fixed.train_objective + 1e-12);
    }
}

#[test]
fn location_shift_moves_only_the_location() {
    let params = Ar1Params::new(0.5, 0.1).unwrap();
    let sample = simulate_errors(&params, &ErrorSampleDesign::uniform(200, 20, 9)).unwrap();
    let shift = 2.5;
    let shifted: Vec<ErrorObservation> =
        sample.iter().map(|o| ErrorObservation { error: o.error + shift, ..o.clone() }).collect();

    let config = FitConfig::fixed(12.0);
    let (a, b) = (fit_gauss(&sample, &config).unwrap(), fit_gauss(&shifted, &config).unwrap());
    let (ErrorModel::Gauss(pa), ErrorModel::Gauss(pb)) = (&a.model, &b.model) else { panic!() };
    assert!((pb.mu - pa.mu - shift).abs() < 1e-6);
    assert!((pb.gamma0 - pa.gamma0).abs() < 1e-6 && (pb.gamma1 - pa.gamma1).abs() < 1e-6);
    assert!((a.train_objective - b.train_objective).abs() < 1e-9);

    let (a, b) = (fit_qr(&sample, &config, &[0.1, 0.9]).unwrap(), fit_qr(&shifted, &config, &[0.1, 0.9]).unwrap());
    let (ErrorModel::Qr(qa), ErrorModel::Qr(qb)) = (&a.model, &b.model) else { panic!() };
    for (ca, cb) in qa.coeffs.iter().zip(&qb.coeffs) {
        assert!((cb.beta0 - ca.beta0 - shift).abs() < 1e-9);
        assert!((cb.beta1 - ca.beta1).abs() < 1e-9);
    }
    assert!((a.train_objective - b.train_objective).abs() < 1e-9);
}
