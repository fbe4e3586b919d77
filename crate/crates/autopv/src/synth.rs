//! Synthetic hourly PV dataset generator. Power follows a clear-sky bell
//! curve scaled by a seasonal amplitude and an autoregressive cloud process;
//! weather features are correlated with power plus independent noise.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{TimeSeriesFrame, NIGHT_ZERO_HOURS};

/// Feature schema of the generated frame; power is the target at index 0.
pub const SYNTH_FEATURES: [&str; 11] = [
    "power",
    "ghi",
    "dni",
    "dhi",
    "temperature",
    "humidity",
    "wind_speed",
    "wind_direction",
    "pressure",
    "cloud_cover",
    "dew_point",
];

/// Cloud AR(1) persistence per hour; innovations keep the stationary
/// standard deviation near 1 so the logistic squash spans its range. The
/// low persistence makes cloud cover nearly unpredictable from history
/// beyond a few hours, so future-weather inputs carry real information.
const CLOUD_PERSISTENCE: f64 = 0.6;
const CLOUD_INNOVATION: f64 = 0.8;
/// Fraction of output lost under full cloud cover.
const CLOUD_ATTENUATION: f64 = 0.75;
/// Nameplate scale of the simulated plant, arbitrary power units.
const PEAK_POWER: f64 = 100.0;

/// Normalized clear-sky output for an hour of day: a squared-sine bell over
/// the daylight window, zero in the no-irradiation hours.
fn clear_sky_bell(hour: u32) -> f64 {
    if NIGHT_ZERO_HOURS.contains(&hour) {
        return 0.0;
    }
    // Daylight spans hours 3..=20; center each hour in the window.
    let x = (hour as f64 - 3.0 + 0.5) / 18.0;
    (PI * x).sin().powi(2)
}

/// Seasonal amplitude factor, peaking near the summer solstice.
fn seasonal_amplitude(day_of_year: u32) -> f64 {
    1.0 + 0.35 * (2.0 * PI * (day_of_year as f64 - 81.0) / 365.25).sin()
}

/// Generate `days` of hourly data, deterministically per seed. Power is
/// exactly zero in the no-irradiation hours. Cloud cover is the dominant
/// unpredictable factor, so observing (noisy) future weather genuinely
/// helps a forecaster.
pub fn synth_pv(days: usize, seed: u64) -> TimeSeriesFrame {
    assert!(days >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2019, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let n = days * 24;
    let d = SYNTH_FEATURES.len();
    let mut timestamps = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);

    let mut cloud_state: f64 = 0.0;
    for t in 0..n {
        let ts: NaiveDateTime = start + chrono::Duration::hours(t as i64);
        timestamps.push(ts);
        let hour = ts.time().hour();
        let doy = ts.date().ordinal();

        cloud_state = CLOUD_PERSISTENCE * cloud_state
            + CLOUD_INNOVATION * rng.sample::<f64, _>(StandardNormal);
        let cloud_cover = 1.0 / (1.0 + (-1.5 * cloud_state).exp());

        let bell = clear_sky_bell(hour);
        let seasonal = seasonal_amplitude(doy);
        let attenuation = 1.0 - CLOUD_ATTENUATION * cloud_cover;
        let clear = bell * seasonal;

        let power = if bell == 0.0 {
            0.0
        } else {
            let jitter = 1.0 + 0.02 * rng.sample::<f64, _>(StandardNormal);
            (PEAK_POWER * clear * attenuation * jitter).max(0.0)
        };

        let noise = |rng: &mut ChaCha8Rng, s: f64| s * rng.sample::<f64, _>(StandardNormal);
        let ghi = (1000.0 * clear * attenuation + noise(&mut rng, 8.0)).max(0.0);
        let dni = (850.0 * clear * (1.0 - cloud_cover).powi(2) + noise(&mut rng, 8.0)).max(0.0);
        let dhi = (200.0 * clear * (0.3 + 0.7 * cloud_cover) + noise(&mut rng, 4.0)).max(0.0);
        let temperature =
            2.0 + 12.0 * (seasonal - 1.0) / 0.35 + 6.0 * bell - 3.0 * cloud_cover
                + noise(&mut rng, 0.8);
        let humidity =
            (55.0 + 30.0 * cloud_cover - 12.0 * bell + noise(&mut rng, 3.0)).clamp(0.0, 100.0);
        let wind_speed = (3.0 + 2.0 * cloud_cover + noise(&mut rng, 0.7)).max(0.0);
        let wind_direction = rng.gen_range(0.0..360.0);
        let pressure = 1013.0 - 6.0 * cloud_cover + noise(&mut rng, 1.5);
        let dew_point = temperature - (100.0 - humidity) / 5.0 + noise(&mut rng, 0.4);

        values.extend_from_slice(&[
            power,
            ghi,
            dni,
            dhi,
            temperature,
            humidity,
            wind_speed,
            wind_direction,
            pressure,
            cloud_cover,
            dew_point,
        ]);
    }

    let missing = vec![false; values.len()];
    let names = SYNTH_FEATURES.iter().map(|s| s.to_string()).collect();
    TimeSeriesFrame::new(timestamps, values, missing, names, 0)
}
