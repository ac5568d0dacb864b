//! Readers and writers for the pipeline's delimited table formats. Column
//! layouts are documented in the README; every writer renders floats with
//! the shortest round-trip form so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::NaiveDateTime;

use arealize::geom::{areas_from_geojson, AreaUnit, Crosswalk, GridFieldSnapshot, Point};
use arealize::panel::{Fragment, PanelCell};
use arealize::survey::{SizeClass, SpecClass};
use arealize::table::Table;

pub fn read_areas(path: &Path) -> Result<Vec<AreaUnit>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading areas {}", path.display()))?;
    Ok(areas_from_geojson(&text)?)
}

pub fn read_crosswalk(path: &Path) -> Result<Crosswalk> {
    let t = Table::read(path)?;
    let muni = t.col("municipality_id")?;
    let area = t.col("area_id")?;
    Ok(Crosswalk::new(
        t.rows
            .iter()
            .map(|r| (r[muni].clone(), r[area].clone()))
            .collect::<Vec<_>>(),
    )?)
}

/// Reads a field table (variable, year, sector, x, y, value) into one
/// snapshot per (variable, year, sector), ordered by key.
pub fn read_field_snapshots(path: &Path) -> Result<Vec<GridFieldSnapshot>> {
    let t = Table::read(path)?;
    let (cvar, cyear, csec, cx, cy, cval) = (
        t.col("variable")?,
        t.col("year")?,
        t.col("sector")?,
        t.col("x")?,
        t.col("y")?,
        t.col("value")?,
    );
    let mut groups: BTreeMap<(String, i32, String), Vec<(Point, f64)>> = BTreeMap::new();
    for row in &t.rows {
        let key = (row[cvar].clone(), t.i32(row, cyear)?, row[csec].clone());
        groups.entry(key).or_default().push((
            Point::new(t.f64(row, cx)?, t.f64(row, cy)?),
            t.f64(row, cval)?,
        ));
    }
    groups
        .into_iter()
        .map(|((variable, year, sector), samples)| {
            let sector = if sector.is_empty() {
                None
            } else {
                Some(sector)
            };
            Ok(GridFieldSnapshot::new(variable, year, sector, samples)?)
        })
        .collect()
}

/// Timestamps accept `YYYY-MM-DDTHH:MM:SS` or `YYYY-MM-DD HH:MM:SS`.
pub fn parse_timestamp(text: &str) -> Result<NaiveDateTime> {
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok(ts);
        }
    }
    anyhow::bail!("unparseable timestamp {text:?}")
}

/// One raw series observation row.
pub struct SeriesRow {
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub timestamp: NaiveDateTime,
    pub variable: String,
    pub value: Option<f64>,
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    let t = Table::read(path)?;
    let (ccell, cx, cy, cts, cvar, cval) = (
        t.col("cell_id")?,
        t.col("x")?,
        t.col("y")?,
        t.col("timestamp")?,
        t.col("variable")?,
        t.col("value")?,
    );
    t.rows
        .iter()
        .map(|row| {
            Ok(SeriesRow {
                cell_id: row[ccell].clone(),
                x: t.f64(row, cx)?,
                y: t.f64(row, cy)?,
                timestamp: parse_timestamp(&row[cts])?,
                variable: row[cvar].clone(),
                value: t.opt_f64(row, cval)?,
            })
        })
        .collect()
}

/// Census counts: municipality_id, size, spec, year, count.
pub struct CensusRow {
    pub municipality_id: String,
    pub size: SizeClass,
    pub spec: SpecClass,
    pub year: i32,
    pub count: f64,
}

pub fn read_census(path: &Path) -> Result<Vec<CensusRow>> {
    let t = Table::read(path)?;
    let (cmuni, csize, cspec, cyear, ccount) = (
        t.col("municipality_id")?,
        t.col("size")?,
        t.col("spec")?,
        t.col("year")?,
        t.col("count")?,
    );
    t.rows
        .iter()
        .map(|row| {
            Ok(CensusRow {
                municipality_id: row[cmuni].clone(),
                size: SizeClass::parse(&row[csize])?,
                spec: SpecClass::parse(&row[cspec])?,
                year: t.i32(row, cyear)?,
                count: t.f64(row, ccount)?,
            })
        })
        .collect()
}

/// Farm survey observations in long format:
/// farm_id, area_id, size, spec, year, variable, value.
pub struct SampleRow {
    pub farm_id: String,
    pub area_id: String,
    pub size: SizeClass,
    pub spec: SpecClass,
    pub year: i32,
    pub variable: String,
    pub value: f64,
}

pub fn read_sample(path: &Path) -> Result<Vec<SampleRow>> {
    let t = Table::read(path)?;
    let (cfarm, carea, csize, cspec, cyear, cvar, cval) = (
        t.col("farm_id")?,
        t.col("area_id")?,
        t.col("size")?,
        t.col("spec")?,
        t.col("year")?,
        t.col("variable")?,
        t.col("value")?,
    );
    t.rows
        .iter()
        .map(|row| {
            Ok(SampleRow {
                farm_id: row[cfarm].clone(),
                area_id: row[carea].clone(),
                size: SizeClass::parse(&row[csize])?,
                spec: SpecClass::parse(&row[cspec])?,
                year: t.i32(row, cyear)?,
                variable: row[cvar].clone(),
                value: t.f64(row, cval)?,
            })
        })
        .collect()
}

/// Reads a long-format fragment table (source, area_id, year, variable,
/// value) into per-source fragments.
pub fn read_fragments(path: &Path) -> Result<Vec<Fragment>> {
    let t = Table::read(path)?;
    let (csrc, carea, cyear, cvar, cval) = (
        t.col("source")?,
        t.col("area_id")?,
        t.col("year")?,
        t.col("variable")?,
        t.col("value")?,
    );
    let mut by_source: BTreeMap<String, Vec<PanelCell>> = BTreeMap::new();
    for row in &t.rows {
        by_source
            .entry(row[csrc].clone())
            .or_default()
            .push(PanelCell {
                area_id: row[carea].clone(),
                year: t.i32(row, cyear)?,
                variable: row[cvar].clone(),
                value: t.opt_f64(row, cval)?,
            });
    }
    Ok(by_source
        .into_iter()
        .map(|(source, cells)| Fragment { source, cells })
        .collect())
}

pub const FRAGMENT_HEADER: [&str; 5] = ["source", "area_id", "year", "variable", "value"];
