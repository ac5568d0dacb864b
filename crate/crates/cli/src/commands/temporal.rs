//! `aggregate-temporal`: unit conversion, derived meteorological variables,
//! and annual/seasonal summary statistics per grid cell.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use chrono::NaiveDateTime;

use arealize::table::{self, fmt_f64};
use arealize::temporal::{
    convert_unit, physical_violations, relative_humidity, summarize, wind_direction, wind_speed,
    TimedSeries, Window,
};

use crate::config::RunConfig;
use crate::io;
use crate::manifest::Manifest;

pub const SUMMARY_HEADER: [&str; 8] = [
    "cell_id", "x", "y", "year", "season", "variable", "stat", "value",
];

type CellKey = (String, String); // (cell_id, variable)

pub fn run(cfg: &RunConfig, series_path: &Path) -> Result<()> {
    let rows = io::read_series(series_path)?;
    anyhow::ensure!(
        !rows.is_empty(),
        "series table {} is empty",
        series_path.display()
    );

    let mut cells: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut observations: BTreeMap<CellKey, BTreeMap<NaiveDateTime, Option<f64>>> = BTreeMap::new();
    for row in &rows {
        cells.insert(row.cell_id.clone(), (row.x, row.y));
        let rule = cfg.temporal.unit_rule(&row.variable)?;
        let value = row.value.map(|v| convert_unit(v, rule));
        observations
            .entry((row.cell_id.clone(), row.variable.clone()))
            .or_default()
            .insert(row.timestamp, value);
    }

    derive_meteorology(cfg, &mut observations)?;

    let mut out_rows: Vec<Vec<String>> = Vec::new();
    let mut violations: Vec<Vec<String>> = Vec::new();
    for ((cell_id, variable), obs) in &observations {
        let (x, y) = cells[cell_id];
        let series = TimedSeries::new(
            variable.clone(),
            cell_id.clone(),
            obs.iter().map(|(ts, v)| (*ts, *v)).collect(),
        )?;
        for (window, label_of) in [(Window::Annual, None), (Window::Seasonal, Some(()))] {
            for ((year, season), stats) in summarize(&series, window) {
                let season_label = match (label_of, season) {
                    (None, _) => "ANNUAL".to_string(),
                    (Some(()), Some(s)) => s.name().to_string(),
                    (Some(()), None) => unreachable!("seasonal window without season"),
                };
                for (stat, value) in [
                    ("mean", stats.mean),
                    ("min", stats.min),
                    ("max", stats.max),
                    ("sd", stats.sd),
                    ("sum", stats.sum),
                    ("count", stats.count as f64),
                ] {
                    out_rows.push(vec![
                        cell_id.clone(),
                        fmt_f64(x),
                        fmt_f64(y),
                        year.to_string(),
                        season_label.clone(),
                        variable.clone(),
                        stat.to_string(),
                        fmt_f64(value),
                    ]);
                }
                for message in physical_violations(variable, &stats) {
                    violations.push(vec![
                        cell_id.clone(),
                        year.to_string(),
                        season_label.clone(),
                        variable.clone(),
                        message,
                    ]);
                }
            }
        }
    }

    let out = &cfg.out_dir;
    table::write(
        &out.join("temporal_summary.csv"),
        &SUMMARY_HEADER,
        &out_rows,
    )?;
    if !violations.is_empty() {
        eprintln!(
            "warning: {} physical plausibility violations",
            violations.len()
        );
        table::write(
            &out.join("temporal_violations.csv"),
            &["cell_id", "year", "season", "variable", "detail"],
            &violations,
        )?;
    }
    Manifest::new("aggregate-temporal", cfg).write(out)?;
    Ok(())
}

/// Computes ws/wd from u10/v10 and rh from t2m/d2m at matching timestamps.
/// Derived series join the observation map and aggregate like any other
/// variable.
fn derive_meteorology(
    cfg: &RunConfig,
    observations: &mut BTreeMap<CellKey, BTreeMap<NaiveDateTime, Option<f64>>>,
) -> Result<()> {
    let convention = cfg.temporal.convention()?;
    let cells: Vec<String> = observations
        .keys()
        .map(|(cell, _)| cell.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for cell in cells {
        let grab =
            |name: &str, observations: &BTreeMap<CellKey, BTreeMap<NaiveDateTime, Option<f64>>>| {
                observations
                    .get(&(cell.clone(), name.to_string()))
                    .cloned()
                    .unwrap_or_default()
            };
        let u = grab("u10", observations);
        let v = grab("v10", observations);
        if !u.is_empty() && !v.is_empty() {
            let mut ws = BTreeMap::new();
            let mut wd = BTreeMap::new();
            for (ts, uv) in &u {
                let Some(Some(vv)) = v.get(ts) else { continue };
                match uv {
                    Some(uu) => {
                        ws.insert(*ts, Some(wind_speed(*uu, *vv)));
                        wd.insert(*ts, wind_direction(*uu, *vv, convention));
                    }
                    None => {
                        ws.insert(*ts, None);
                        wd.insert(*ts, None);
                    }
                }
            }
            observations.insert((cell.clone(), "ws".into()), ws);
            observations.insert((cell.clone(), "wd".into()), wd);
        }
        let t2m = grab("t2m", observations);
        let d2m = grab("d2m", observations);
        if !t2m.is_empty() && !d2m.is_empty() {
            let mut rh = BTreeMap::new();
            for (ts, tv) in &t2m {
                let Some(Some(dv)) = d2m.get(ts) else {
                    continue;
                };
                let value = match tv {
                    Some(tt) => Some(relative_humidity(
                        *tt,
                        *dv,
                        cfg.temporal.magnus_a,
                        cfg.temporal.magnus_b,
                    )?),
                    None => None,
                };
                rh.insert(*ts, value);
            }
            observations.insert((cell.clone(), "rh".into()), rh);
        }
    }
    Ok(())
}

/// Converts summary rows back into per-(variable, stat, season) field tables
/// for the alignment step; used by the demo pipeline.
pub fn summary_to_fields(
    summary: &arealize::table::Table,
    selections: &[(String, String, String)],
) -> Result<Vec<arealize::geom::GridFieldSnapshot>> {
    let (cx, cy, cyear, cseason, cvar, cstat, cval) = (
        summary.col("x")?,
        summary.col("y")?,
        summary.col("year")?,
        summary.col("season")?,
        summary.col("variable")?,
        summary.col("stat")?,
        summary.col("value")?,
    );
    let mut groups: BTreeMap<(String, i32), Vec<(arealize::geom::Point, f64)>> = BTreeMap::new();
    for row in &summary.rows {
        for (variable, stat, season) in selections {
            if &row[cvar] == variable && &row[cstat] == stat && &row[cseason] == season {
                let year = summary.i32(row, cyear)?;
                let name = if season == "ANNUAL" {
                    format!("{variable}_{stat}")
                } else {
                    format!("{variable}_{stat}_{}", season.to_lowercase())
                };
                groups.entry((name, year)).or_default().push((
                    arealize::geom::Point::new(summary.f64(row, cx)?, summary.f64(row, cy)?),
                    summary.f64(row, cval)?,
                ));
            }
        }
    }
    groups
        .into_iter()
        .map(|((variable, year), samples)| {
            Ok(arealize::geom::GridFieldSnapshot::new(
                variable, year, None, samples,
            )?)
        })
        .collect()
}
