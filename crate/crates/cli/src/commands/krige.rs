//! `krige`: aligns every (variable, year, sector) field snapshot onto the
//! areal units with cross-validated local block kriging.

use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use serde_json::json;

use arealize::geom::{AreaUnit, GridFieldSnapshot};
use arealize::table::{self, fmt_f64};
use arealize::tuning::AlignmentResult;

use crate::config::RunConfig;
use crate::io;
use crate::manifest::Manifest;

pub const PREDICTIONS_HEADER: [&str; 10] = [
    "variable", "year", "sector", "area_id", "family", "nmax", "n_used", "mean", "variance",
    "cv_rmse",
];
pub const CV_TABLE_HEADER: [&str; 6] = ["variable", "year", "sector", "stage", "candidate", "rmse"];
pub const CV_PREDICTIONS_HEADER: [&str; 7] = [
    "variable",
    "year",
    "sector",
    "x",
    "y",
    "observed",
    "predicted",
];

pub fn run(cfg: &RunConfig, field_path: &Path, areas_path: &Path) -> Result<()> {
    let fields = io::read_field_snapshots(field_path)?;
    let areas = io::read_areas(areas_path)?;
    anyhow::ensure!(
        !fields.is_empty(),
        "field table {} is empty",
        field_path.display()
    );
    let results = align_all(cfg, &fields, &areas)?;
    write_outputs(cfg, &fields, &results, "krige")?;
    Ok(())
}

/// Aligns all fields in parallel with deterministic output ordering.
pub fn align_all(
    cfg: &RunConfig,
    fields: &[GridFieldSnapshot],
    areas: &[AreaUnit],
) -> Result<Vec<AlignmentResult>> {
    let tuning = cfg.tuning.to_tuning_config(cfg.seed)?;
    fields
        .par_iter()
        .map(|field| {
            arealize::tuning::align_field(field, areas, &tuning).map_err(|e| {
                anyhow::anyhow!("aligning {} {} failed: {e}", field.variable, field.year)
            })
        })
        .collect()
}

pub fn write_outputs(
    cfg: &RunConfig,
    fields: &[GridFieldSnapshot],
    results: &[AlignmentResult],
    command: &str,
) -> Result<()> {
    let mut manifest = Manifest::new(command, cfg);
    let mut pred_rows = Vec::new();
    let mut cv_rows = Vec::new();
    let mut cvp_rows = Vec::new();
    for (field, result) in fields.iter().zip(results) {
        let sector = field.sector.clone().unwrap_or_default();
        for p in &result.predictions {
            pred_rows.push(vec![
                field.variable.clone(),
                field.year.to_string(),
                sector.clone(),
                p.area_id.clone(),
                p.family.clone(),
                p.nmax.to_string(),
                p.n_used.to_string(),
                fmt_f64(p.mean),
                fmt_f64(p.variance),
                fmt_f64(p.cv_rmse),
            ]);
        }
        for rec in &result.cv_table {
            cv_rows.push(vec![
                field.variable.clone(),
                field.year.to_string(),
                sector.clone(),
                rec.stage.clone(),
                rec.candidate.clone(),
                if rec.rmse.is_finite() {
                    fmt_f64(rec.rmse)
                } else {
                    "failed".to_string()
                },
            ]);
        }
        for (p, observed, predicted) in &result.cv_predictions {
            cvp_rows.push(vec![
                field.variable.clone(),
                field.year.to_string(),
                sector.clone(),
                fmt_f64(p.x),
                fmt_f64(p.y),
                fmt_f64(*observed),
                fmt_f64(*predicted),
            ]);
        }
        for (area, error) in &result.failures {
            eprintln!(
                "warning: {} {} {}: area {area} skipped: {error}",
                field.variable, field.year, sector
            );
        }
        manifest.push_selection(json!({
            "variable": field.variable,
            "year": field.year,
            "sector": field.sector,
            "chosen_family": result.chosen_family.name(),
            "chosen_nmax": result.chosen_nmax,
            "variogram": {
                "family": result.fitted.family.name(),
                "nugget": result.fitted.nugget,
                "partial_sill": result.fitted.partial_sill,
                "range": result.fitted.range,
                "nu": match result.fitted.family {
                    arealize::variogram::Family::Matern { nu } => Some(nu),
                    _ => None,
                },
                "pure_nugget": result.fitted.is_pure_nugget(),
            },
            "cv_rmse": result.predictions.first().map(|p| p.cv_rmse),
            "failed_areas": result.failures.len(),
        }));
    }
    let out = &cfg.out_dir;
    table::write(
        &out.join("predictions.csv"),
        &PREDICTIONS_HEADER,
        &pred_rows,
    )?;
    table::write(&out.join("cv_table.csv"), &CV_TABLE_HEADER, &cv_rows)?;
    table::write(
        &out.join("cv_predictions.csv"),
        &CV_PREDICTIONS_HEADER,
        &cvp_rows,
    )?;
    manifest.write(out)?;
    Ok(())
}
