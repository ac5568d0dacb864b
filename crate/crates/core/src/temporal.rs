//! Unit conversions, derived meteorological variables, season assignment,
//! and annual/seasonal summary statistics for high-frequency gridded series.

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnus saturation vapour pressure constants (a, b in degrees Celsius).
pub const MAGNUS_A: f64 = 17.625;
pub const MAGNUS_B: f64 = 243.04;

/// Unit conversion applied before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitRule {
    /// Kelvin to degrees Celsius.
    KToC,
    /// Metres to millimetres (water fluxes).
    MToMm,
    Identity,
}

pub fn convert_unit(value: f64, rule: UnitRule) -> f64 {
    match rule {
        UnitRule::KToC => value - 273.15,
        UnitRule::MToMm => value * 1000.0,
        UnitRule::Identity => value,
    }
}

/// Wind speed as the Euclidean norm of the horizontal components.
pub fn wind_speed(u: f64, v: f64) -> f64 {
    u.hypot(v)
}

/// Wind direction convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindDirectionConvention {
    /// wd = 180 − atan2(u/ws, v/ws)·180/π, wrapped into [0, 360).
    Mirrored,
    /// wd = 180 + atan2(u/ws, v/ws)·180/π, wrapped into [0, 360).
    Meteorological,
}

/// Wind direction in degrees within [0, 360); a zero wind vector has no
/// direction and yields `None` (emitted as missing).
pub fn wind_direction(u: f64, v: f64, convention: WindDirectionConvention) -> Option<f64> {
    let ws = wind_speed(u, v);
    if ws == 0.0 {
        return None;
    }
    let angle = (u / ws).atan2(v / ws).to_degrees();
    let wd = match convention {
        WindDirectionConvention::Mirrored => 180.0 - angle,
        WindDirectionConvention::Meteorological => 180.0 + angle,
    };
    Some(wd.rem_euclid(360.0))
}

/// Relative humidity (percent) from air and dew-point temperature in
/// degrees Celsius, via the Magnus saturation vapour pressure ratio with
/// constants (a, b). The result is clamped into (0, 100]; dew points up to
/// 0.5 degrees above the air temperature are tolerated as reanalysis noise
/// and clamp to 100.
pub fn relative_humidity(t2m: f64, d2m: f64, a: f64, b: f64) -> Result<f64> {
    if t2m <= -b || d2m <= -b {
        return Err(Error::Domain(format!(
            "temperature at or below -{b} C is outside the Magnus domain"
        )));
    }
    if d2m > t2m + 0.5 {
        return Err(Error::Domain(format!(
            "dew point {d2m} C exceeds air temperature {t2m} C beyond tolerance"
        )));
    }
    let es = |t: f64| (a * t / (b + t)).exp();
    let rh = 100.0 * es(d2m) / es(t2m);
    Ok(rh.min(100.0))
}

/// Climatological season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub fn name(&self) -> &'static str {
        match self {
            Season::Winter => "Winter",
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Fall => "Fall",
        }
    }
}

/// Maps a timestamp to its season and season year. December belongs to the
/// winter of its own calendar year, so the four seasons exactly partition
/// each calendar year.
pub fn assign_season(ts: NaiveDateTime) -> (Season, i32) {
    let season = match ts.month() {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        _ => Season::Fall,
    };
    (season, ts.year())
}

/// One observed series for a (variable, grid cell) pair. Values may be
/// missing; timestamps are strictly increasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimedSeries {
    pub variable: String,
    pub cell_id: String,
    pub observations: Vec<(NaiveDateTime, Option<f64>)>,
}

impl TimedSeries {
    pub fn new(
        variable: impl Into<String>,
        cell_id: impl Into<String>,
        observations: Vec<(NaiveDateTime, Option<f64>)>,
    ) -> Result<Self> {
        for w in observations.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Domain(format!(
                    "timestamps not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if observations
            .iter()
            .any(|(_, v)| v.is_some_and(|x| !x.is_finite()))
        {
            return Err(Error::Domain(
                "non-finite value in series; encode gaps as missing".into(),
            ));
        }
        Ok(TimedSeries {
            variable: variable.into(),
            cell_id: cell_id.into(),
            observations,
        })
    }
}

/// Aggregation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Annual,
    Seasonal,
}

/// Summary statistics over the non-missing observations of one window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation (n − 1); zero for a single observation.
    pub sd: f64,
    pub sum: f64,
    pub count: usize,
}

/// Key of an aggregation window: the year and, for seasonal windows, the
/// season.
pub type WindowKey = (i32, Option<Season>);

/// Computes summary statistics per window. Windows without observations are
/// simply absent from the output (missing by contract); missing values are
/// excluded, never imputed.
pub fn summarize(series: &TimedSeries, window: Window) -> Vec<(WindowKey, SummaryStats)> {
    let mut groups: std::collections::BTreeMap<(i32, Option<Season>), Vec<f64>> =
        std::collections::BTreeMap::new();
    for (ts, value) in &series.observations {
        let Some(v) = value else { continue };
        let key = match window {
            Window::Annual => (ts.year(), None),
            Window::Seasonal => {
                let (season, year) = assign_season(*ts);
                (year, Some(season))
            }
        };
        groups.entry(key).or_default().push(*v);
    }
    groups
        .into_iter()
        .map(|(key, vals)| (key, stats_of(&vals)))
        .collect()
}

fn stats_of(vals: &[f64]) -> SummaryStats {
    let count = vals.len();
    let sum: f64 = vals.iter().sum();
    let mean = sum / count as f64;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sd = if count < 2 {
        0.0
    } else {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
    };
    SummaryStats {
        mean,
        min,
        max,
        sd,
        sum,
        count,
    }
}

/// Variables constrained to be non-negative after aggregation (water fluxes
/// and runoff).
pub const NONNEGATIVE_VARIABLES: &[&str] = &["tp", "sf", "ro", "sro", "ssro"];

/// Post-aggregation physical plausibility check for one summarized window.
/// Returns human-readable violation descriptions, empty when the window is
/// plausible.
pub fn physical_violations(variable: &str, stats: &SummaryStats) -> Vec<String> {
    let mut out = Vec::new();
    if NONNEGATIVE_VARIABLES.contains(&variable) && stats.min < 0.0 {
        out.push(format!("{variable}: negative minimum {}", stats.min));
    }
    if variable == "rh" {
        if stats.min <= 0.0 {
            out.push(format!("rh: minimum {} outside (0, 100]", stats.min));
        }
        if stats.max > 100.0 {
            out.push(format!("rh: maximum {} outside (0, 100]", stats.max));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(y: i32, m: u32, d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    #[test]
    fn unit_conversions() {
        assert_eq!(convert_unit(273.15, UnitRule::KToC), 0.0);
        assert_eq!(convert_unit(0.001, UnitRule::MToMm), 1.0);
        assert_eq!(convert_unit(5.5, UnitRule::Identity), 5.5);
    }

    #[test]
    fn wind_speed_examples() {
        assert_eq!(wind_speed(3.0, 4.0), 5.0);
        assert_eq!(wind_speed(0.0, 0.0), 0.0);
        assert_eq!(wind_speed(-1.0, 0.0), 1.0);
        assert_eq!(wind_speed(1.0, 2.0), wind_speed(-1.0, -2.0));
    }

    #[test]
    fn wind_direction_mirrored_formula() {
        let wd = |u, v| wind_direction(u, v, WindDirectionConvention::Mirrored).unwrap();
        assert!((wd(0.0, 1.0) - 180.0).abs() < 1e-12);
        assert!(wd(0.0, -1.0).abs() < 1e-12);
        assert!((wd(1.0, 0.0) - 90.0).abs() < 1e-12);
        assert!(wind_direction(0.0, 0.0, WindDirectionConvention::Mirrored).is_none());
    }

    #[test]
    fn wind_direction_opposite_vectors_differ_by_180() {
        for conv in [
            WindDirectionConvention::Mirrored,
            WindDirectionConvention::Meteorological,
        ] {
            let a = wind_direction(2.0, -1.5, conv).unwrap();
            let b = wind_direction(-2.0, 1.5, conv).unwrap();
            let diff = (a - b).rem_euclid(360.0);
            assert!((diff - 180.0).abs() < 1e-9, "{conv:?}: {a} vs {b}");
        }
    }

    #[test]
    fn relative_humidity_saturation_and_noise_clamp() {
        let rh = relative_humidity(15.0, 15.0, MAGNUS_A, MAGNUS_B).unwrap();
        assert_eq!(rh, 100.0);
        let noisy = relative_humidity(10.0, 10.3, MAGNUS_A, MAGNUS_B).unwrap();
        assert_eq!(noisy, 100.0);
        assert!(relative_humidity(10.0, 11.0, MAGNUS_A, MAGNUS_B).is_err());
        assert!(relative_humidity(-250.0, -250.0, MAGNUS_A, MAGNUS_B).is_err());
    }

    #[test]
    fn relative_humidity_magnus_value() {
        // independent evaluation of the Magnus expression at t=20, d=10
        let a = MAGNUS_A;
        let b = MAGNUS_B;
        let expect = 100.0 * (a * 10.0 / (b + 10.0)).exp() / (a * 20.0 / (b + 20.0)).exp();
        let got = relative_humidity(20.0, 10.0, a, b).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 52.5).abs() < 0.1, "got {got}");
    }

    #[test]
    fn season_assignment() {
        assert_eq!(assign_season(ts(2015, 12, 15)), (Season::Winter, 2015));
        assert_eq!(assign_season(ts(2016, 2, 10)), (Season::Winter, 2016));
        assert_eq!(assign_season(ts(2019, 7, 1)), (Season::Summer, 2019));
        assert_eq!(assign_season(ts(2019, 10, 31)), (Season::Fall, 2019));
        assert_eq!(assign_season(ts(2019, 3, 1)), (Season::Spring, 2019));
    }

    #[test]
    fn summarize_constant_year() {
        let obs: Vec<_> = (1..=12).map(|m| (ts(2020, m, 1), Some(5.0))).collect();
        let series = TimedSeries::new("t2m", "c1", obs).unwrap();
        let out = summarize(&series, Window::Annual);
        assert_eq!(out.len(), 1);
        let (key, s) = out[0];
        assert_eq!(key, (2020, None));
        assert_eq!((s.mean, s.min, s.max, s.sd), (5.0, 5.0, 5.0, 0.0));
        assert_eq!(s.count, 12);
    }

    #[test]
    fn summarize_monthly_ramp() {
        let obs: Vec<_> = (1..=12).map(|m| (ts(2020, m, 1), Some(m as f64))).collect();
        let series = TimedSeries::new("v", "c1", obs).unwrap();
        let out = summarize(&series, Window::Annual);
        let s = out[0].1;
        assert_eq!(s.mean, 6.5);
        assert_eq!(s.sum, 78.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 12.0);
    }

    #[test]
    fn seasonal_means_reconstruct_annual_mean() {
        let obs: Vec<_> = (1..=12)
            .map(|m| (ts(2021, m, 3), Some((m as f64 * 0.77).sin() * 9.0)))
            .collect();
        let series = TimedSeries::new("v", "c1", obs).unwrap();
        let annual = summarize(&series, Window::Annual)[0].1;
        let seasonal = summarize(&series, Window::Seasonal);
        let mut weighted = 0.0;
        let mut count = 0usize;
        for ((year, _), s) in &seasonal {
            assert_eq!(*year, 2021);
            weighted += s.mean * s.count as f64;
            count += s.count;
        }
        assert_eq!(count, annual.count);
        assert!((weighted / count as f64 - annual.mean).abs() < 1e-9);
    }

    #[test]
    fn missing_values_are_excluded_not_imputed() {
        let obs = vec![
            (ts(2020, 1, 1), Some(2.0)),
            (ts(2020, 2, 1), None),
            (ts(2020, 3, 1), Some(4.0)),
        ];
        let series = TimedSeries::new("v", "c1", obs).unwrap();
        let s = summarize(&series, Window::Annual)[0].1;
        assert_eq!(s.count, 2);
        assert_eq!(s.mean, 3.0);
    }

    #[test]
    fn empty_window_emits_nothing() {
        let series = TimedSeries::new("v", "c1", vec![(ts(2020, 1, 1), None)]).unwrap();
        assert!(summarize(&series, Window::Annual).is_empty());
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let obs = vec![(ts(2020, 2, 1), Some(1.0)), (ts(2020, 1, 1), Some(2.0))];
        assert!(TimedSeries::new("v", "c1", obs).is_err());
    }

    #[test]
    fn physical_checks_flag_violations() {
        let bad = SummaryStats {
            mean: -0.5,
            min: -1.0,
            max: 0.0,
            sd: 0.1,
            sum: -2.0,
            count: 4,
        };
        assert_eq!(physical_violations("tp", &bad).len(), 1);
        assert!(physical_violations("t2m", &bad).is_empty());
        let rh_bad = SummaryStats {
            mean: 101.0,
            min: 90.0,
            max: 150.0,
            sd: 0.0,
            sum: 0.0,
            count: 1,
        };
        assert_eq!(physical_violations("rh", &rh_bad).len(), 1);
    }
}
