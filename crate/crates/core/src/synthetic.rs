//! Deterministic synthetic weather series in the layout of the hourly
//! weather-history export, for tests, demos and desk-scale experiments when
//! the real file is not at hand.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

pub const WEATHER_HEADER: &str = "Formatted Date,Summary,Precip Type,Temperature (C),Apparent Temperature (C),Humidity,Wind Speed (km/h),Wind Bearing (degrees),Visibility (km),Loud Cover,Pressure (millibars),Daily Summary";

/// AR(1) process `x_t = phi * x_{t-1} + e_t` with unit-variance stationary
/// distribution.
struct Ar1 {
    phi: f64,
    state: f64,
    noise: Normal<f64>,
}

impl Ar1 {
    fn new(phi: f64) -> Self {
        Ar1 {
            phi,
            state: 0.0,
            noise: Normal::new(0.0, (1.0 - phi * phi).sqrt()).expect("valid sigma"),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.state = self.phi * self.state + self.noise.sample(rng);
        self.state
    }
}

/// Hourly rows starting 2006-04-01 00:00 +0200 with diurnal and seasonal
/// cycles, persistent weather regimes and coupled variables.
pub fn weather_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regime = Ar1::new(0.995);
    let mut temp_noise = Ar1::new(0.9);
    let mut wind_noise = Ar1::new(0.95);
    let mut hum_noise = Ar1::new(0.85);
    let start = NaiveDate::from_ymd_opt(2006, 4, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start");
    let tau = std::f64::consts::TAU;

    let mut out = String::with_capacity(rows * 120);
    out.push_str(WEATHER_HEADER);
    out.push('\n');
    for t in 0..rows {
        let stamp = start + Duration::hours(t as i64);
        let hour = (t % 24) as f64;
        let day = t as f64 / 24.0;
        let diurnal = (tau * (hour - 9.0) / 24.0).sin();
        let seasonal = (tau * (day - 100.0) / 365.25).sin();
        let r = regime.next(&mut rng);

        let pressure = 1016.0 + 7.0 * r - 2.0 * seasonal;
        let temp = 11.0 + 10.0 * seasonal + 5.0 * diurnal - 1.5 * r + 1.2 * temp_noise.next(&mut rng);
        let humidity = (0.73 - 0.12 * diurnal - 0.05 * seasonal + 0.06 * r + 0.05 * hum_noise.next(&mut rng))
            .clamp(0.05, 1.0);
        let wind = (10.8 + 2.5 * diurnal - 3.0 * r + 4.0 * wind_noise.next(&mut rng)).max(0.0);
        let _ = writeln!(
            out,
            "{}.000 +0200,Partly Cloudy,rain,{temp:.6},{temp:.6},{humidity:.4},{wind:.4},180,10.0,0,{pressure:.3},Synthetic day.",
            stamp.format("%Y-%m-%d %H:%M:%S")
        );
    }
    out
}

pub fn write_weather_csv(path: &Path, rows: usize, seed: u64) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, weather_csv(rows, seed)).map_err(|e| Error::io(path, e))
}
