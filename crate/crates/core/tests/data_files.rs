//! File round trips and the shape of the bundled samples.

use std::path::PathBuf;

use fixedevent::ar1::{simulate_errors, Ar1Params, ErrorSampleDesign};
use fixedevent::data::{
    build_dataset, read_benchmarks, read_errors, read_forecasts, read_outcomes, read_predictions, write_errors,
    write_predictions, HorizonMode,
};
use fixedevent::evaluation::CasePrediction;
use fixedevent::models::IntervalForecast;
use fixedevent::ErrorObservation;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn dataset(prefix: &str, mode: HorizonMode) -> Vec<ErrorObservation> {
    let records = read_forecasts(&data(&format!("{prefix}_forecasts.csv"))).unwrap();
    let outcomes = read_outcomes(&data(&format!("{prefix}_outcomes.csv"))).unwrap();
    build_dataset(&records, &outcomes, mode).unwrap()
}

#[test]
fn german_sample_shape() {
    let cases = dataset("german", HorizonMode::Half);
    let mut years: Vec<i32> = cases.iter().map(|o| o.target_year).collect();
    years.dedup();
    assert_eq!(years, (2002..=2021).collect::<Vec<_>>());
    for o in &cases {
        assert!((0.0..=27.5).contains(&o.horizon) && (2.0 * o.horizon).fract() == 0.0, "{}", o.case_id);
        let (x, y) = (o.point_forecast.unwrap(), o.realization.unwrap());
        assert!((y - x - o.error).abs() < 1e-12);
    }
}

#[test]
fn us_sample_shape() {
    let cases = dataset("us", HorizonMode::Half);
    let allowed: Vec<f64> = (0..8).map(|k| 1.5 + 3.0 * k as f64).collect();
    assert!(cases.iter().all(|o| allowed.contains(&o.horizon)));
    assert_eq!(cases.len(), 320);
    let bench = read_benchmarks(&data("us_benchmark.csv")).unwrap();
    assert_eq!(bench.len(), cases.len());
    assert!(bench.iter().all(|b| b.lower <= b.upper));
}

#[test]
fn ceiling_mode_rounds_horizons_up() {
    let half = dataset("us", HorizonMode::Half);
    let ceil = dataset("us", HorizonMode::Ceiling);
    assert_eq!(half.len(), ceil.len());
    for (a, b) in half.iter().zip(&ceil) {
        assert_eq!(b.horizon, a.horizon.ceil());
        assert_eq!(a.error, b.error);
    }
}

#[test]
fn error_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("errors.csv");
    let sample = simulate_errors(&Ar1Params::new(0.5, 0.1).unwrap(), &ErrorSampleDesign::uniform(50, 5, 2)).unwrap();
    write_errors(&path, &sample).unwrap();
    assert_eq!(read_errors(&path).unwrap(), sample);
}

#[test]
fn prediction_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("intervals.csv");
    let predictions: Vec<CasePrediction> = (0..10)
        .map(|i| CasePrediction {
            case_id: format!("{}:h{}", 2000 + i, 0.5 * i as f64),
            target_year: 2000 + i,
            horizon: 0.5 * i as f64,
            interval: IntervalForecast::new(-0.1 * i as f64, 0.3 + 0.1 * i as f64, 0.8).unwrap(),
        })
        .collect();
    write_predictions(&path, &predictions).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), predictions);
}
