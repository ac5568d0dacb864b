//! `panel-build` and `validate`: full-join assembly of the fragments over
//! the area x year grid, missing-data accounting, and the validation
//! battery.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;

use arealize::panel::{
    fidelity_violation, missing_report, validate, Panel, RuleSet, ShareGroup, Violation,
};
use arealize::table::{self, fmt_f64, Table};

use crate::config::RunConfig;
use crate::io;
use crate::manifest::Manifest;

pub const PANEL_LONG_HEADER: [&str; 5] = ["source", "area_id", "year", "variable", "value"];
pub const MISSING_HEADER: [&str; 5] = ["source", "variable", "year", "present", "missing"];
pub const VIOLATIONS_HEADER: [&str; 5] = ["rule", "area_id", "year", "variable", "detail"];

pub fn build_panel(
    cfg: &RunConfig,
    areas_path: &Path,
    fragment_paths: &[PathBuf],
) -> Result<Panel> {
    let areas = io::read_areas(areas_path)?;
    let mut panel = Panel::new(
        areas.iter().map(|a| a.id.clone()).collect(),
        (cfg.panel.year_min, cfg.panel.year_max),
    )?;
    for path in fragment_paths {
        let fragments = io::read_fragments(path)?;
        panel.assemble(&fragments)?;
    }
    Ok(panel)
}

pub fn run_build(cfg: &RunConfig, areas_path: &Path, fragment_paths: &[PathBuf]) -> Result<()> {
    anyhow::ensure!(!fragment_paths.is_empty(), "no fragment files supplied");
    let panel = build_panel(cfg, areas_path, fragment_paths)?;
    write_panel(cfg, &panel)?;
    Manifest::new("panel-build", cfg).write(&cfg.out_dir)?;
    Ok(())
}

pub fn write_panel(cfg: &RunConfig, panel: &Panel) -> Result<()> {
    let out = &cfg.out_dir;
    // long format
    let mut long_rows = Vec::new();
    for ((source, variable), vals) in &panel.columns {
        for ((area, year), v) in vals {
            long_rows.push(vec![
                source.clone(),
                area.clone(),
                year.to_string(),
                variable.clone(),
                fmt_f64(*v),
            ]);
        }
    }
    long_rows.sort();
    table::write(&out.join("panel_long.csv"), &PANEL_LONG_HEADER, &long_rows)?;

    // wide format: one row per (area, year), columns ordered by
    // (source, variable), header spelled source.variable
    let columns: Vec<_> = panel.columns.keys().cloned().collect();
    let mut header: Vec<String> = vec!["area_id".into(), "year".into()];
    header.extend(columns.iter().map(|(s, v)| format!("{s}.{v}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut wide_rows = Vec::new();
    for area in &panel.area_ids {
        for year in panel.year_list() {
            let mut row = vec![area.clone(), year.to_string()];
            for key in &columns {
                row.push(
                    panel
                        .value(key, area, year)
                        .map(fmt_f64)
                        .unwrap_or_default(),
                );
            }
            wide_rows.push(row);
        }
    }
    table::write(&out.join("panel_wide.csv"), &header_refs, &wide_rows)?;

    let report = missing_report(panel);
    let report_rows: Vec<Vec<String>> = report
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                r.variable.clone(),
                r.year.to_string(),
                r.present.to_string(),
                r.missing.to_string(),
            ]
        })
        .collect();
    table::write(
        &out.join("missing_report.csv"),
        &MISSING_HEADER,
        &report_rows,
    )?;
    Ok(())
}

/// Builds the rule set: fixed physical rules plus share groups discovered
/// from the `lc_share_` and `elev_share_` naming convention.
pub fn rule_set(cfg: &RunConfig, panel: &Panel) -> RuleSet {
    let mut rules = RuleSet::default();
    let mut lc: Vec<String> = Vec::new();
    let mut elev: Vec<String> = Vec::new();
    for (_, variable) in panel.columns.keys() {
        if variable.starts_with("lc_share_") && !lc.contains(variable) {
            lc.push(variable.clone());
        }
        if variable.starts_with("elev_share_") && !elev.contains(variable) {
            elev.push(variable.clone());
        }
    }
    for (name, variables) in [("landcover_shares", lc), ("elevation_band_shares", elev)] {
        if !variables.is_empty() {
            rules.share_groups.push(ShareGroup {
                name: name.into(),
                variables,
                target: 100.0,
                tolerance: cfg.tolerances.share_tol.max(1e-6),
            });
        }
    }
    rules
}

/// Runs the battery; returns the violations (the caller decides on strict
/// failure).
pub fn run_validate(
    cfg: &RunConfig,
    panel_long: &Path,
    areas_path: &Path,
    cv_predictions: Option<&Path>,
) -> Result<Vec<Violation>> {
    let areas = io::read_areas(areas_path)?;
    let t = Table::read(panel_long)?;
    let (csrc, carea, cyear, cvar, cval) = (
        t.col("source")?,
        t.col("area_id")?,
        t.col("year")?,
        t.col("variable")?,
        t.col("value")?,
    );
    let mut panel = Panel::new(
        areas.iter().map(|a| a.id.clone()).collect(),
        (cfg.panel.year_min, cfg.panel.year_max),
    )?;
    let mut by_source: BTreeMap<String, Vec<arealize::panel::PanelCell>> = BTreeMap::new();
    for row in &t.rows {
        by_source
            .entry(row[csrc].clone())
            .or_default()
            .push(arealize::panel::PanelCell {
                area_id: row[carea].clone(),
                year: t.i32(row, cyear)?,
                variable: row[cvar].clone(),
                value: t.opt_f64(row, cval)?,
            });
    }
    let fragments: Vec<arealize::panel::Fragment> = by_source
        .into_iter()
        .map(|(source, cells)| arealize::panel::Fragment { source, cells })
        .collect();
    panel.assemble(&fragments)?;

    let rules = rule_set(cfg, &panel);
    let mut violations = validate(&panel, &rules);
    if let Some(cvp) = cv_predictions {
        violations.extend(fidelity_violations(cfg, cvp)?);
    }

    let rows: Vec<Vec<String>> = violations
        .iter()
        .map(|v| {
            vec![
                v.rule.clone(),
                v.area_id.clone(),
                v.year.to_string(),
                v.variable.clone(),
                v.detail.clone(),
            ]
        })
        .collect();
    table::write(
        &cfg.out_dir.join("violations.csv"),
        &VIOLATIONS_HEADER,
        &rows,
    )?;
    let mut manifest = Manifest::new("validate", cfg);
    manifest.push(
        "violation_count",
        serde_json::json!(violations.len()),
        "engine",
    );
    manifest.write(&cfg.out_dir)?;
    Ok(violations)
}

/// Per (variable, year, sector) correlation between held-out predictions and
/// observations, checked against the fidelity threshold.
pub fn fidelity_violations(cfg: &RunConfig, cv_predictions: &Path) -> Result<Vec<Violation>> {
    let t = Table::read(cv_predictions)?;
    let (cvar, cyear, csec, cobs, cpred) = (
        t.col("variable")?,
        t.col("year")?,
        t.col("sector")?,
        t.col("observed")?,
        t.col("predicted")?,
    );
    type ObsPred = (Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(String, i32, String), ObsPred> = BTreeMap::new();
    for row in &t.rows {
        let entry = groups
            .entry((row[cvar].clone(), t.i32(row, cyear)?, row[csec].clone()))
            .or_default();
        entry.0.push(t.f64(row, cobs)?);
        entry.1.push(t.f64(row, cpred)?);
    }
    let mut out = Vec::new();
    for ((variable, year, sector), (obs, pred)) in &groups {
        let label = if sector.is_empty() {
            format!("{variable}@{year}")
        } else {
            format!("{variable}@{year}/{sector}")
        };
        if let Some(mut v) = fidelity_violation(obs, pred, cfg.validate.fidelity_threshold, &label)
        {
            v.year = *year;
            out.push(v);
        }
    }
    Ok(out)
}
