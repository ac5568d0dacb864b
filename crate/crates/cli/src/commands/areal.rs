//! `aggregate-areal`: crosswalk aggregation of municipal tables, land-cover
//! reclassification with piecewise-constant expansion and area shares, and
//! elevation-band shares, emitted as panel fragments.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};

use arealize::areal::{
    aggregate_crosswalk, area_shares, elevation_band_shares, reclassify, AggMethod, ReclassTable,
    SnapshotSchedule,
};
use arealize::geom::{AreaUnit, Point};
use arealize::table::{self, fmt_f64, Table};

use crate::config::RunConfig;
use crate::io;
use crate::manifest::Manifest;

pub struct ArealInputs<'a> {
    pub areas: &'a Path,
    pub crosswalk: Option<&'a Path>,
    pub municipal: Option<&'a Path>,
    pub landcover: Option<&'a Path>,
    pub reclass: Option<&'a Path>,
    pub schedule: Option<&'a Path>,
    pub cell_area: Option<f64>,
    pub dem: Option<&'a Path>,
}

pub fn run(cfg: &RunConfig, inputs: &ArealInputs) -> Result<()> {
    let areas = io::read_areas(inputs.areas)?;
    let years: Vec<i32> = (cfg.panel.year_min..=cfg.panel.year_max).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();

    if let Some(muni_path) = inputs.municipal {
        let xw_path = inputs
            .crosswalk
            .context("--municipal requires --crosswalk")?;
        let xwalk = io::read_crosswalk(xw_path)?;
        rows.extend(municipal_fragment(muni_path, &xwalk)?);
    }
    if let Some(lc_path) = inputs.landcover {
        let reclass_path = inputs.reclass.context("--landcover requires --reclass")?;
        let schedule_path = inputs.schedule.context("--landcover requires --schedule")?;
        let cell_area = inputs
            .cell_area
            .context("--landcover requires --cell-area")?;
        rows.extend(landcover_fragment(
            lc_path,
            reclass_path,
            schedule_path,
            cell_area,
            &areas,
            &years,
        )?);
    }
    if let Some(dem_path) = inputs.dem {
        rows.extend(terrain_fragment(dem_path, &areas, &years)?);
    }
    anyhow::ensure!(
        !rows.is_empty(),
        "no areal inputs supplied; pass --municipal, --landcover, or --dem"
    );
    rows.sort();
    table::write(
        &cfg.out_dir.join("areal_fragments.csv"),
        &io::FRAGMENT_HEADER,
        &rows,
    )?;
    Manifest::new("aggregate-areal", cfg).write(&cfg.out_dir)?;
    Ok(())
}

/// Municipal indicators: columns municipality_id, year, variable, value,
/// method (sum | mean), aggregated to areas through the crosswalk.
pub fn municipal_fragment(
    path: &Path,
    xwalk: &arealize::geom::Crosswalk,
) -> Result<Vec<Vec<String>>> {
    let t = Table::read(path)?;
    let (cmuni, cyear, cvar, cval, cmethod) = (
        t.col("municipality_id")?,
        t.col("year")?,
        t.col("variable")?,
        t.col("value")?,
        t.col("method")?,
    );
    let mut groups: BTreeMap<(i32, String, AggMethod), Vec<(String, f64)>> = BTreeMap::new();
    for row in &t.rows {
        let method = match row[cmethod].as_str() {
            "sum" => AggMethod::Sum,
            "mean" => AggMethod::Mean,
            other => anyhow::bail!("unknown aggregation method {other}"),
        };
        let Some(value) = t.opt_f64(row, cval)? else {
            continue; // missing municipal values contribute nothing
        };
        groups
            .entry((t.i32(row, cyear)?, row[cvar].clone(), method))
            .or_default()
            .push((row[cmuni].clone(), value));
    }
    let mut rows = Vec::new();
    for ((year, variable, method), records) in &groups {
        let aggregated = aggregate_crosswalk(records, xwalk, *method)?;
        for (area, value) in aggregated {
            rows.push(vec![
                "municipal".to_string(),
                area,
                year.to_string(),
                variable.clone(),
                fmt_f64(value),
            ]);
        }
    }
    Ok(rows)
}

fn read_reclass(path: &Path) -> Result<ReclassTable> {
    let t = Table::read(path)?;
    let (corig, charm) = (t.col("original")?, t.col("harmonized")?);
    Ok(ReclassTable::new(
        t.rows
            .iter()
            .map(|r| (r[corig].clone(), r[charm].clone()))
            .collect::<Vec<_>>(),
    )?)
}

fn read_schedule(path: &Path) -> Result<SnapshotSchedule> {
    let t = Table::read(path)?;
    let (csnap, cfrom, cto) = (
        t.col("snapshot_year")?,
        t.col("from_year")?,
        t.col("to_year")?,
    );
    Ok(SnapshotSchedule::new(
        t.rows
            .iter()
            .map(|r| Ok((t.i32(r, csnap)?, (t.i32(r, cfrom)?, t.i32(r, cto)?))))
            .collect::<Result<Vec<_>>>()?,
    )?)
}

/// Assigns raster cell centres to the areal unit containing them; cells
/// outside every unit are dropped.
fn assign_cells(points: &[Point], areas: &[AreaUnit]) -> Vec<Option<usize>> {
    points
        .iter()
        .map(|p| {
            areas.iter().position(|a| {
                let (min, max) = a.bbox();
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && a.contains(p)
            })
        })
        .collect()
}

/// Land cover: snapshot rasters (snapshot_year, x, y, class) reclassified to
/// the harmonized scheme and converted to per-area percentage shares, then
/// expanded over the panel years by the schedule.
pub fn landcover_fragment(
    lc_path: &Path,
    reclass_path: &Path,
    schedule_path: &Path,
    cell_area: f64,
    areas: &[AreaUnit],
    years: &[i32],
) -> Result<Vec<Vec<String>>> {
    let reclass = read_reclass(reclass_path)?;
    let schedule = read_schedule(schedule_path)?;
    let t = Table::read(lc_path)?;
    let (csnap, cx, cy, cclass) = (
        t.col("snapshot_year")?,
        t.col("x")?,
        t.col("y")?,
        t.col("class")?,
    );
    // group raster cells by snapshot year
    let mut snapshots: BTreeMap<i32, Vec<(Point, String)>> = BTreeMap::new();
    for row in &t.rows {
        snapshots.entry(t.i32(row, csnap)?).or_default().push((
            Point::new(t.f64(row, cx)?, t.f64(row, cy)?),
            row[cclass].clone(),
        ));
    }
    let classes: Vec<String> = {
        let mut c: Vec<String> = reclass.entries.values().cloned().collect();
        c.sort();
        c.dedup();
        c
    };
    // per snapshot: per-area class shares
    let mut shares_by_snapshot: BTreeMap<i32, BTreeMap<String, BTreeMap<String, f64>>> =
        BTreeMap::new();
    for (snap_year, cells) in &snapshots {
        let relabeled = reclassify(cells, &reclass)?;
        let points: Vec<Point> = relabeled.iter().map(|(p, _)| *p).collect();
        let assignment = assign_cells(&points, areas);
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for ((_, class), area_idx) in relabeled.iter().zip(&assignment) {
            if let Some(i) = area_idx {
                *counts
                    .entry(areas[*i].id.clone())
                    .or_default()
                    .entry(class.clone())
                    .or_insert(0) += 1;
            }
        }
        let mut per_area = BTreeMap::new();
        for (area_id, class_counts) in counts {
            let unit = areas
                .iter()
                .find(|a| a.id == area_id)
                .expect("assigned area");
            let shares = area_shares(&class_counts, cell_area, unit.area)?;
            per_area.insert(area_id, shares);
        }
        shares_by_snapshot.insert(*snap_year, per_area);
    }
    // expand over panel years
    let mut rows = Vec::new();
    for &year in years {
        let snap = schedule.expand_piecewise(year)?;
        let per_area = shares_by_snapshot
            .get(&snap)
            .with_context(|| format!("schedule names snapshot {snap} but no raster carries it"))?;
        for (area_id, shares) in per_area {
            for class in &classes {
                let share = shares.get(class).copied().unwrap_or(0.0);
                rows.push(vec![
                    "landcover".to_string(),
                    area_id.clone(),
                    year.to_string(),
                    format!("lc_share_{class}"),
                    fmt_f64(share),
                ]);
            }
        }
    }
    Ok(rows)
}

/// Elevation: per-area band shares and summary statistics from a DEM sample
/// (x, y, elevation); time-invariant values are replicated over the panel
/// years.
pub fn terrain_fragment(
    dem_path: &Path,
    areas: &[AreaUnit],
    years: &[i32],
) -> Result<Vec<Vec<String>>> {
    let t = Table::read(dem_path)?;
    let (cx, cy, celev) = (t.col("x")?, t.col("y")?, t.col("elevation")?);
    let mut points = Vec::with_capacity(t.rows.len());
    let mut elevations = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        points.push(Point::new(t.f64(row, cx)?, t.f64(row, cy)?));
        elevations.push(t.f64(row, celev)?);
    }
    let assignment = assign_cells(&points, areas);
    let mut per_area: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (elev, area_idx) in elevations.iter().zip(&assignment) {
        if let Some(i) = area_idx {
            per_area
                .entry(areas[*i].id.clone())
                .or_default()
                .push(*elev);
        }
    }
    let mut rows = Vec::new();
    for (area_id, values) in &per_area {
        let (plain, hills, mountains) = elevation_band_shares(values, (200.0, 600.0))?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        for &year in years {
            for (variable, value) in [
                ("elev_share_plain", plain),
                ("elev_share_hills", hills),
                ("elev_share_mountains", mountains),
                ("elev_mean", mean),
                ("elev_min", min),
                ("elev_max", max),
                ("elev_sd", sd),
            ] {
                rows.push(vec![
                    "terrain".to_string(),
                    area_id.clone(),
                    year.to_string(),
                    variable.to_string(),
                    fmt_f64(value),
                ]);
            }
        }
    }
    Ok(rows)
}
