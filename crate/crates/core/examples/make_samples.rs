//! Regenerates the synthetic sample datasets in `crates/core/data`.
//!
//! Both samples are drawn from a monthly AR(1) world: each institution
//! reports the optimal forecast given the months observed so far, plus its own
//! noise. One file set mimics a European archive with irregular dates and
//! three institutions, the other a quarterly survey with one forecast per
//! quarter.
//!
//! Run with `cargo run -p fixedevent --example make_samples`.

use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fixedevent::ar1::{sigma_h, Ar1Params, MonthlyPath};
use fixedevent::data::{
    code_horizon, write_benchmarks, write_forecasts, write_outcomes, BenchmarkInterval, Outcome, RawForecastRecord,
};

const MEAN_GROWTH: f64 = 1.5;

struct World {
    first_year: i32,
    params: Ar1Params,
    path: MonthlyPath,
}

impl World {
    /// Path covering two lead years before `first_year` through `last_year`.
    fn new(first_year: i32, last_year: i32, params: Ar1Params, rng: &mut ChaCha8Rng) -> Self {
        let months = 12 * (last_year - first_year + 3) as usize;
        Self { first_year, params, path: MonthlyPath::simulate(&params, months, rng) }
    }

    fn year_end(&self, year: i32) -> usize {
        12 * (year - self.first_year + 3) as usize
    }

    fn realization(&self, year: i32) -> f64 {
        MEAN_GROWTH + self.path.annual_value(self.year_end(year))
    }

    /// Optimal forecast with `h` whole months of the year still unobserved.
    fn forecast(&self, year: i32, h: usize) -> f64 {
        MEAN_GROWTH + self.path.optimal_forecast(self.params.rho, self.year_end(year), h)
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

fn record(world: &World, inst: &str, when: NaiveDate, year: i32, noise_sd: f64, rng: &mut ChaCha8Rng) -> RawForecastRecord {
    let h = code_horizon(when, year).expect("forecast dated before the year ends").ceil() as usize;
    let noise: f64 = noise_sd * rng.sample::<f64, _>(StandardNormal);
    RawForecastRecord {
        institution: inst.to_string(),
        forecast_date: when,
        target_year: year,
        point_forecast: round2(world.forecast(year, h) + noise),
    }
}

fn outcomes(world: &World, years: std::ops::RangeInclusive<i32>) -> Vec<Outcome> {
    years.map(|y| Outcome { target_year: y, realization: round2(world.realization(y)) }).collect()
}

fn german(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let params = Ar1Params::new(0.5, 0.1).unwrap();
    let world = World::new(2002, 2021, params, &mut rng);
    // (institution, months of issue, day range); issues run from the autumn
    // two years ahead until the target year's December
    let schedule: [(&str, [u32; 4], (u32, u32)); 3] = [
        ("inst_a", [3, 6, 9, 12], (10, 20)),
        ("inst_b", [1, 4, 7, 10], (1, 6)),
        ("inst_c", [3, 6, 9, 12], (12, 28)),
    ];
    let mut records = Vec::new();
    for year in 2002..=2021 {
        for (inst, months, (d0, d1)) in schedule {
            for offset in [-1, 0] {
                for m in months {
                    // roughly one in three scheduled issues is skipped
                    if rng.random_range(0..3) == 0 {
                        continue;
                    }
                    let when = date(year + offset, m, rng.random_range(d0..=d1));
                    records.push(record(&world, inst, when, year, 0.15, &mut rng));
                }
            }
        }
        // an early outlook in late September two years ahead
        let when = date(year - 2, 9, rng.random_range(12..=18));
        records.push(record(&world, "inst_a", when, year, 0.15, &mut rng));
    }
    write_forecasts(&dir.join("german_forecasts.csv"), &records).unwrap();
    write_outcomes(&dir.join("german_outcomes.csv"), &outcomes(&world, 2002..=2021)).unwrap();
}

fn us(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(19820215);
    let params = Ar1Params::new(0.6, 0.08).unwrap();
    let world = World::new(1982, 2021, params, &mut rng);
    let mut records = Vec::new();
    let mut bench = Vec::new();
    for year in 1982..=2021 {
        for offset in [-1, 0] {
            for m in [2, 5, 8, 11] {
                let when = date(year + offset, m, 15);
                let r = record(&world, "survey", when, year, 0.1, &mut rng);
                let h = code_horizon(when, year).unwrap();
                // survey-style interval: roughly calibrated, rounded to bins
                let spread = 0.8 * sigma_h(&params, h.ceil() as usize) + 0.1;
                let wobble: f64 = 1.0 + 0.15 * rng.sample::<f64, _>(StandardNormal);
                let half = (1.2815515655446004 * spread * wobble.max(0.5) * 10.0).round() / 10.0;
                bench.push(BenchmarkInterval {
                    case_id: fixedevent::data::case_id(year, h),
                    lower: round2(r.point_forecast - half),
                    upper: round2(r.point_forecast + half),
                    source: "survey-histogram".into(),
                });
                records.push(r);
            }
        }
    }
    write_forecasts(&dir.join("us_forecasts.csv"), &records).unwrap();
    write_outcomes(&dir.join("us_outcomes.csv"), &outcomes(&world, 1982..=2021)).unwrap();
    write_benchmarks(&dir.join("us_benchmark.csv"), &bench).unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir).unwrap();
    german(&dir);
    us(&dir);
    println!("wrote samples to {}", dir.display());
}
