//! `demo`: generates a synthetic desk-scale dataset (256 areal units,
//! five years) and runs the full pipeline on it: temporal aggregation,
//! block-kriging alignment, crosswalk and raster harmonization, survey
//! weighting and estimation, variance regularization, panel assembly, and
//! validation. Identical seeds reproduce identical outputs byte for byte.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;

use arealize::geom::GridFieldSnapshot;
use arealize::rng::Rng;
use arealize::survey::{SizeClass, SpecClass};
use arealize::table::{self, fmt_f64, Table};

use crate::config::RunConfig;
use crate::io;
use crate::manifest::Manifest;

use super::{areal, gvf, krige, panel, survey, temporal};

pub const DEMO_YEARS: (i32, i32) = (2019, 2023);
const GRID_SIDE: usize = 16; // 16 x 16 = 256 areal units
const ENV_SAMPLES_SIDE: usize = 20; // env fields sampled on a 20 x 20 grid
const MET_CELLS_SIDE: usize = 10; // met series on a 10 x 10 grid
const RASTER_SIDE: usize = 64; // land cover / DEM rasters
const MUNIS_PER_AREA: usize = 2;

pub fn run(base_cfg: &RunConfig) -> Result<()> {
    // the demo pins the geometry-dependent knobs to its synthetic world
    let mut cfg = base_cfg.clone();
    cfg.tuning.spacing = 0.5;
    cfg.panel.year_min = DEMO_YEARS.0;
    cfg.panel.year_max = DEMO_YEARS.1;

    let input = cfg.out_dir.join("input");
    std::fs::create_dir_all(&input)?;

    eprintln!("demo: generating synthetic inputs");
    write_areas(&cfg, &input)?;
    write_crosswalk(&input)?;
    write_env_fields(&cfg, &input)?;
    write_met_series(&cfg, &input)?;
    write_municipal(&cfg, &input)?;
    write_landcover(&cfg, &input)?;
    write_dem(&cfg, &input)?;
    write_census_and_sample(&cfg, &input)?;

    eprintln!("demo: aggregating high-frequency series");
    temporal::run(&cfg, &input.join("series.csv"))?;

    eprintln!("demo: aligning gridded fields to areal units");
    let mut fields = io::read_field_snapshots(&input.join("fields.csv"))?;
    let summary = Table::read(&cfg.out_dir.join("temporal_summary.csv"))?;
    let met_fields = temporal::summary_to_fields(
        &summary,
        &[
            ("t2m".into(), "mean".into(), "ANNUAL".into()),
            ("rh".into(), "mean".into(), "ANNUAL".into()),
            ("tp".into(), "sum".into(), "ANNUAL".into()),
            ("t2m".into(), "mean".into(), "Summer".into()),
            ("t2m".into(), "mean".into(), "Winter".into()),
        ],
    )?;
    let met_names: Vec<String> = met_fields.iter().map(|f| f.variable.clone()).collect();
    fields.extend(met_fields);
    let areas = io::read_areas(&input.join("areas.geojson"))?;
    let results = krige::align_all(&cfg, &fields, &areas)?;
    krige::write_outputs(&cfg, &fields, &results, "krige")?;
    write_kriged_fragment(&cfg, &fields, &results, &met_names)?;

    eprintln!("demo: aggregating municipal and raster layers");
    areal::run(
        &cfg,
        &areal::ArealInputs {
            areas: &input.join("areas.geojson"),
            crosswalk: Some(&input.join("crosswalk.csv")),
            municipal: Some(&input.join("municipal.csv")),
            landcover: Some(&input.join("landcover.csv")),
            reclass: Some(&input.join("reclass.csv")),
            schedule: Some(&input.join("schedule.csv")),
            cell_area: Some((GRID_SIDE as f64 / RASTER_SIDE as f64).powi(2)),
            dem: Some(&input.join("dem.csv")),
        },
    )?;

    eprintln!("demo: survey weighting and estimation");
    survey::run_weights(
        &cfg,
        &input.join("census.csv"),
        &input.join("crosswalk.csv"),
        &input.join("sample.csv"),
    )?;
    survey::run_estimate(
        &cfg,
        &cfg.out_dir.join("weights.csv"),
        &cfg.out_dir.join("stratum_counts.csv"),
        &input.join("sample.csv"),
    )?;
    gvf::run(&cfg, &cfg.out_dir.join("estimates.csv"))?;
    write_farm_fragment(&cfg)?;

    eprintln!("demo: assembling panel");
    let fragment_paths: Vec<PathBuf> = vec![
        cfg.out_dir.join("kriged_fragments.csv"),
        cfg.out_dir.join("areal_fragments.csv"),
        cfg.out_dir.join("farm_fragments.csv"),
    ];
    panel::run_build(&cfg, &input.join("areas.geojson"), &fragment_paths)?;

    eprintln!("demo: validating panel");
    let violations = panel::run_validate(
        &cfg,
        &cfg.out_dir.join("panel_long.csv"),
        &input.join("areas.geojson"),
        Some(&cfg.out_dir.join("cv_predictions.csv")),
    )?;
    if !violations.is_empty() {
        eprintln!(
            "demo: {} validation violations (see violations.csv)",
            violations.len()
        );
    }

    let mut manifest = Manifest::new("demo", &cfg);
    manifest.push("panel_years", serde_json::json!(DEMO_YEARS), "engine");
    manifest.push(
        "areal_units",
        serde_json::json!(GRID_SIDE * GRID_SIDE),
        "engine",
    );
    manifest.push("violations", serde_json::json!(violations.len()), "engine");
    manifest.write(&cfg.out_dir)?;
    eprintln!("demo: complete");
    Ok(())
}

fn area_id(ix: usize, iy: usize) -> String {
    format!("A{:03}", iy * GRID_SIDE + ix + 1)
}

fn write_areas(_cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let mut features = Vec::new();
    for iy in 0..GRID_SIDE {
        for ix in 0..GRID_SIDE {
            let (x0, y0) = (ix as f64, iy as f64);
            features.push(serde_json::json!({
                "type": "Feature",
                "properties": {"id": area_id(ix, iy)},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x0, y0], [x0 + 1.0, y0], [x0 + 1.0, y0 + 1.0], [x0, y0 + 1.0], [x0, y0]]],
                },
            }));
        }
    }
    let doc = serde_json::json!({"type": "FeatureCollection", "features": features});
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(input.join("areas.geojson"), text)?;
    Ok(())
}

fn municipalities() -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut k = 0usize;
    for iy in 0..GRID_SIDE {
        for ix in 0..GRID_SIDE {
            for _ in 0..MUNIS_PER_AREA {
                k += 1;
                out.push((format!("M{k:04}"), area_id(ix, iy)));
            }
        }
    }
    out
}

fn write_crosswalk(input: &std::path::Path) -> Result<()> {
    let rows: Vec<Vec<String>> = municipalities()
        .into_iter()
        .map(|(m, a)| vec![m, a])
        .collect();
    table::write(
        &input.join("crosswalk.csv"),
        &["municipality_id", "area_id"],
        &rows,
    )?;
    Ok(())
}

/// Smooth synthetic surfaces with a seeded noise component; spatial
/// variation dominates the noise so interpolation fidelity stays high.
fn env_surface(variable: &str, year: i32, x: f64, y: f64) -> f64 {
    let t = f64::from(year - DEMO_YEARS.0);
    match variable {
        "nh3_emis" => {
            24.0 + 7.0 * (x / 4.5).sin() * (y / 6.0).cos() + 0.9 * (x / 16.0) * t + 0.35 * y
        }
        _ => 38.0 + 9.0 * (x / 5.0).cos() * ((y + 2.0) / 6.5).sin() - 0.6 * t + 0.25 * x,
    }
}

fn write_env_fields(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let mut rows = Vec::new();
    let step = GRID_SIDE as f64 / ENV_SAMPLES_SIDE as f64;
    for (variable, sector) in [("nh3_emis", "agriculture"), ("pm10_conc", "")] {
        for year in DEMO_YEARS.0..=DEMO_YEARS.1 {
            let mut rng = Rng::stream(
                cfg.seed,
                &format!("demo-field:{variable}"),
                (year - DEMO_YEARS.0) as u64,
            );
            for iy in 0..ENV_SAMPLES_SIDE {
                for ix in 0..ENV_SAMPLES_SIDE {
                    let x = (ix as f64 + 0.5) * step;
                    let y = (iy as f64 + 0.5) * step;
                    let value = env_surface(variable, year, x, y) + 0.3 * rng.next_normal();
                    rows.push(vec![
                        variable.to_string(),
                        year.to_string(),
                        sector.to_string(),
                        fmt_f64(x),
                        fmt_f64(y),
                        fmt_f64(value),
                    ]);
                }
            }
        }
    }
    table::write(
        &input.join("fields.csv"),
        &["variable", "year", "sector", "x", "y", "value"],
        &rows,
    )?;
    Ok(())
}

fn write_met_series(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let mut rows = Vec::new();
    let step = GRID_SIDE as f64 / MET_CELLS_SIDE as f64;
    for iy in 0..MET_CELLS_SIDE {
        for ix in 0..MET_CELLS_SIDE {
            let cell_id = format!("C{:03}", iy * MET_CELLS_SIDE + ix + 1);
            let x = (ix as f64 + 0.5) * step;
            let y = (iy as f64 + 0.5) * step;
            let mut rng = Rng::stream(cfg.seed, &format!("demo-series:{cell_id}"), 0);
            for year in DEMO_YEARS.0..=DEMO_YEARS.1 {
                for month in 1u32..=12 {
                    let ts = format!("{year}-{month:02}-15T12:00:00");
                    let phase = (f64::from(month) - 1.5) / 12.0 * std::f64::consts::TAU;
                    // Kelvin temperature with a seasonal cycle and a gentle
                    // north-south gradient
                    let t2m = 273.15 + 11.0 - 9.5 * phase.cos()
                        + 0.25 * (16.0 - y)
                        + 0.4 * rng.next_normal();
                    // dew-point deficit dries from west to east so relative
                    // humidity keeps an interpolable spatial gradient
                    let deficit =
                        1.0 + 2.2 * (x / 16.0) + 0.6 * (y / 7.0).sin() + 0.25 * rng.next_f64();
                    let d2m = t2m - deficit;
                    // monthly precipitation in metres, never negative
                    let tp = 0.030
                        + 0.015 * (phase + 1.0).sin().abs()
                        + 0.004 * (x / 8.0).sin()
                        + 0.003 * rng.next_f64();
                    let u10 = 1.2 + 0.8 * rng.next_normal();
                    let v10 = 0.4 + 0.8 * rng.next_normal();
                    for (variable, value) in [
                        ("t2m", t2m),
                        ("d2m", d2m),
                        ("tp", tp),
                        ("u10", u10),
                        ("v10", v10),
                    ] {
                        rows.push(vec![
                            cell_id.clone(),
                            fmt_f64(x),
                            fmt_f64(y),
                            ts.clone(),
                            variable.to_string(),
                            fmt_f64(value),
                        ]);
                    }
                }
            }
        }
    }
    table::write(
        &input.join("series.csv"),
        &["cell_id", "x", "y", "timestamp", "variable", "value"],
        &rows,
    )?;
    Ok(())
}

fn write_municipal(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let mut rows = Vec::new();
    let munis = municipalities();
    let mut rng = Rng::stream(cfg.seed, "demo-municipal", 0);
    for (muni, _) in &munis {
        let herd_base = 60.0 + 340.0 * rng.next_f64();
        let rate_base = 38.0 + 18.0 * rng.next_f64();
        for year in DEMO_YEARS.0..=DEMO_YEARS.1 {
            let t = f64::from(year - DEMO_YEARS.0);
            let heads = (herd_base * (1.0 + 0.02 * t) + 12.0 * rng.next_normal()).max(0.0);
            let rate = rate_base + 0.4 * t + 0.8 * rng.next_normal();
            rows.push(vec![
                muni.clone(),
                year.to_string(),
                "cattle_heads".to_string(),
                fmt_f64(heads.round()),
                "sum".to_string(),
            ]);
            rows.push(vec![
                muni.clone(),
                year.to_string(),
                "employment_rate".to_string(),
                fmt_f64(rate),
                "mean".to_string(),
            ]);
        }
    }
    table::write(
        &input.join("municipal.csv"),
        &["municipality_id", "year", "variable", "value", "method"],
        &rows,
    )?;
    Ok(())
}

const RECLASS: [(&str, &str); 12] = [
    ("111", "Urban"),
    ("112", "Urban"),
    ("211", "ArableLand"),
    ("212", "ArableLand"),
    ("221", "PermanentCrops"),
    ("231", "Pastures"),
    ("242", "HetAgro"),
    ("311", "Forests"),
    ("312", "Forests"),
    ("321", "GrassScrubOpen"),
    ("411", "Wetlands"),
    ("511", "Water"),
];

fn write_landcover(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let reclass_rows: Vec<Vec<String>> = RECLASS
        .iter()
        .map(|(orig, harm)| vec![orig.to_string(), harm.to_string()])
        .collect();
    table::write(
        &input.join("reclass.csv"),
        &["original", "harmonized"],
        &reclass_rows,
    )?;
    table::write(
        &input.join("schedule.csv"),
        &["snapshot_year", "from_year", "to_year"],
        &[
            vec!["2012".into(), "2011".into(), "2017".into()],
            vec!["2018".into(), "2018".into(), "2024".into()],
        ],
    )?;

    let step = GRID_SIDE as f64 / RASTER_SIDE as f64;
    let mut rows = Vec::new();
    for snapshot in [2012, 2018] {
        let mut rng = Rng::stream(cfg.seed, "demo-landcover", snapshot as u64);
        for iy in 0..RASTER_SIDE {
            for ix in 0..RASTER_SIDE {
                let x = (ix as f64 + 0.5) * step;
                let y = (iy as f64 + 0.5) * step;
                // broad spatial zones with seeded speckle
                let zone = if y > 13.0 {
                    "311"
                } else if y > 11.5 {
                    "321"
                } else if x < 2.0 && y < 3.0 {
                    "511"
                } else if (x - 8.0).abs() < 1.0 && y < 2.0 {
                    "411"
                } else if ((x as i64) + (y as i64)) % 5 == 0 {
                    "112"
                } else if y > 8.0 {
                    "231"
                } else if x > 12.0 {
                    "221"
                } else {
                    "211"
                };
                let code = if rng.next_f64() < 0.12 {
                    // speckle: flip to a random other class
                    RECLASS[rng.below(RECLASS.len())].0
                } else {
                    zone
                };
                rows.push(vec![
                    snapshot.to_string(),
                    fmt_f64(x),
                    fmt_f64(y),
                    code.to_string(),
                ]);
            }
        }
    }
    table::write(
        &input.join("landcover.csv"),
        &["snapshot_year", "x", "y", "class"],
        &rows,
    )?;
    Ok(())
}

fn write_dem(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let step = GRID_SIDE as f64 / RASTER_SIDE as f64;
    let mut rng = Rng::stream(cfg.seed, "demo-dem", 0);
    let mut rows = Vec::new();
    for iy in 0..RASTER_SIDE {
        for ix in 0..RASTER_SIDE {
            let x = (ix as f64 + 0.5) * step;
            let y = (iy as f64 + 0.5) * step;
            // plains in the south rising to mountains in the north
            let elevation = (25.0
                + 950.0 * (y / 16.0).powi(2)
                + 60.0 * (x / 5.0).sin()
                + 25.0 * rng.next_normal())
            .max(0.0);
            rows.push(vec![fmt_f64(x), fmt_f64(y), fmt_f64(elevation)]);
        }
    }
    table::write(&input.join("dem.csv"), &["x", "y", "elevation"], &rows)?;
    Ok(())
}

fn write_census_and_sample(cfg: &RunConfig, input: &std::path::Path) -> Result<()> {
    let munis = municipalities();
    let mut census_rows = Vec::new();
    let mut rng = Rng::stream(cfg.seed, "demo-census", 0);
    // reconstructed per-area populations, needed to cap the sample draw
    let mut pop_2010: BTreeMap<(String, usize, usize), f64> = BTreeMap::new();
    let mut pop_2020: BTreeMap<(String, usize, usize), f64> = BTreeMap::new();
    for (muni, area) in &munis {
        for (s, size) in SizeClass::ALL.iter().enumerate() {
            for (t, spec) in SpecClass::ALL.iter().enumerate() {
                // some strata are structurally empty
                if rng.next_f64() < 0.22 {
                    continue;
                }
                let base = match size {
                    SizeClass::Small => 4.0 + 14.0 * rng.next_f64(),
                    SizeClass::Large => 1.0 + 5.0 * rng.next_f64(),
                };
                let n2010 = base.round().max(1.0);
                let decline = 0.55 + 0.4 * rng.next_f64();
                let n2020 = (n2010 * decline).round();
                for (year, count) in [(2010, n2010), (2020, n2020)] {
                    if count > 0.0 {
                        census_rows.push(vec![
                            muni.clone(),
                            size.name().to_string(),
                            spec.name().to_string(),
                            year.to_string(),
                            fmt_f64(count),
                        ]);
                    }
                }
                *pop_2010.entry((area.clone(), s, t)).or_insert(0.0) += n2010;
                *pop_2020.entry((area.clone(), s, t)).or_insert(0.0) += n2020;
            }
        }
    }
    table::write(
        &input.join("census.csv"),
        &["municipality_id", "size", "spec", "year", "count"],
        &census_rows,
    )?;

    // sampled farms per domain, capped by the reconstructed populations
    let mut sample_rows = Vec::new();
    let mut sample_rng = Rng::stream(cfg.seed, "demo-sample", 0);
    let mut areas: Vec<String> = munis.iter().map(|(_, a)| a.clone()).collect();
    areas.sort();
    areas.dedup();
    for area in &areas {
        for year in DEMO_YEARS.0..=DEMO_YEARS.1 {
            let u = sample_rng.next_f64();
            let n_dy = if u < 0.10 {
                0
            } else if u < 0.25 {
                1
            } else if u < 0.40 {
                2
            } else {
                3 + sample_rng.below(6)
            };
            // per-stratum populations of this year
            let mut strata: Vec<(usize, usize, f64)> = Vec::new();
            for s in 0..2 {
                for t in 0..3 {
                    let n10 = pop_2010.get(&(area.clone(), s, t)).copied().unwrap_or(0.0);
                    let n20 = pop_2020.get(&(area.clone(), s, t)).copied().unwrap_or(0.0);
                    let pop = arealize::survey::interpolate_population(n10, n20, year)?;
                    if pop >= 1.0 {
                        strata.push((s, t, pop));
                    }
                }
            }
            if strata.is_empty() {
                continue;
            }
            let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            let total_pop: f64 = strata.iter().map(|(_, _, p)| p).sum();
            let mut farm = 0usize;
            let mut attempts = 0usize;
            while farm < n_dy && attempts < 50 * n_dy.max(1) {
                attempts += 1;
                // draw a stratum with probability proportional to population
                let mut draw = sample_rng.next_f64() * total_pop;
                let mut chosen = strata[strata.len() - 1];
                for &(s, t, p) in &strata {
                    if draw < p {
                        chosen = (s, t, p);
                        break;
                    }
                    draw -= p;
                }
                let (s, t, pop) = chosen;
                let cur = counts.entry((s, t)).or_insert(0);
                if (*cur as f64) + 1.0 > pop.floor() {
                    continue; // stratum exhausted
                }
                *cur += 1;
                farm += 1;
                let size = SizeClass::ALL[s];
                let spec = SpecClass::ALL[t];
                let farm_id = format!("F{area}Y{year}N{farm:02}");
                let so_total = match size {
                    SizeClass::Small => {
                        (20_000.0 * (0.7 * sample_rng.next_normal()).exp()).clamp(8_000.0, 99_000.0)
                    }
                    SizeClass::Large => {
                        (180_000.0 * (0.5 * sample_rng.next_normal()).exp()).max(100_000.0)
                    }
                };
                let uaa = match spec {
                    SpecClass::Crop => 30.0 + 9.0 * sample_rng.next_normal(),
                    SpecClass::Livestock => 52.0 + 14.0 * sample_rng.next_normal(),
                    SpecClass::Mixed => 40.0 + 11.0 * sample_rng.next_normal(),
                }
                .max(1.0);
                for (variable, value) in [("so_total", so_total), ("uaa_ha", uaa)] {
                    sample_rows.push(vec![
                        farm_id.clone(),
                        area.clone(),
                        size.name().to_string(),
                        spec.name().to_string(),
                        year.to_string(),
                        variable.to_string(),
                        fmt_f64(value),
                    ]);
                }
            }
        }
    }
    table::write(
        &input.join("sample.csv"),
        &[
            "farm_id", "area_id", "size", "spec", "year", "variable", "value",
        ],
        &sample_rows,
    )?;
    Ok(())
}

/// Converts alignment results into the kriged panel fragment: the block mean
/// per variable plus its kriging variance under `<variable>_bkvar`.
fn write_kriged_fragment(
    cfg: &RunConfig,
    fields: &[GridFieldSnapshot],
    results: &[arealize::tuning::AlignmentResult],
    met_names: &[String],
) -> Result<()> {
    let mut rows = Vec::new();
    for (field, result) in fields.iter().zip(results) {
        let source = if met_names.contains(&field.variable) {
            "met"
        } else {
            "env"
        };
        for p in &result.predictions {
            rows.push(vec![
                source.to_string(),
                p.area_id.clone(),
                field.year.to_string(),
                field.variable.clone(),
                fmt_f64(p.mean),
            ]);
            rows.push(vec![
                source.to_string(),
                p.area_id.clone(),
                field.year.to_string(),
                format!("{}_bkvar", field.variable),
                fmt_f64(p.variance),
            ]);
        }
    }
    rows.sort();
    table::write(
        &cfg.out_dir.join("kriged_fragments.csv"),
        &io::FRAGMENT_HEADER,
        &rows,
    )?;
    Ok(())
}

/// Survey estimates and regularized variances as the farm panel fragment.
fn write_farm_fragment(cfg: &RunConfig) -> Result<()> {
    let est = Table::read(&cfg.out_dir.join("estimates.csv"))?;
    let (carea, cyear, cvar, ctotal, cmean) = (
        est.col("area_id")?,
        est.col("year")?,
        est.col("variable")?,
        est.col("total")?,
        est.col("mean")?,
    );
    let mut rows = Vec::new();
    for row in &est.rows {
        let area = row[carea].clone();
        let year = row[cyear].clone();
        let variable = &row[cvar];
        rows.push(vec![
            "farm".to_string(),
            area.clone(),
            year.clone(),
            format!("{variable}_total"),
            row[ctotal].clone(),
        ]);
        rows.push(vec![
            "farm".to_string(),
            area,
            year,
            format!("{variable}_mean"),
            row[cmean].clone(),
        ]);
    }
    let var = Table::read(&cfg.out_dir.join("variances.csv"))?;
    let (varea, vyear, vvar, vtotf, vmeanf) = (
        var.col("area_id")?,
        var.col("year")?,
        var.col("variable")?,
        var.col("var_total_final")?,
        var.col("var_mean_final")?,
    );
    for row in &var.rows {
        let variable = &row[vvar];
        rows.push(vec![
            "farm".to_string(),
            row[varea].clone(),
            row[vyear].clone(),
            format!("{variable}_var_total"),
            row[vtotf].clone(),
        ]);
        rows.push(vec![
            "farm".to_string(),
            row[varea].clone(),
            row[vyear].clone(),
            format!("{variable}_var_mean"),
            row[vmeanf].clone(),
        ]);
    }
    rows.sort();
    table::write(
        &cfg.out_dir.join("farm_fragments.csv"),
        &io::FRAGMENT_HEADER,
        &rows,
    )?;
    Ok(())
}
