//! `survey-weights` and `survey-estimate`: census-based stratum
//! reconstruction, the calibrated weighting hierarchy, and design-based
//! domain estimation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};

use arealize::survey::{
    build_weights, design_variance, domain_population, domain_sample, ht_estimate,
    interpolate_population, Cell, DomainGrid, Method, SizeClass, SpecClass,
};
use arealize::table::{self, fmt_f64, Table};

use crate::config::RunConfig;
use crate::io::{self, CensusRow, SampleRow};
use crate::manifest::Manifest;

pub const WEIGHTS_HEADER: [&str; 7] = [
    "area_id",
    "size",
    "spec",
    "year",
    "weight",
    "method",
    "donor_year",
];
pub const COUNTS_HEADER: [&str; 6] = ["area_id", "size", "spec", "year", "population", "sample"];
pub const ESTIMATES_HEADER: [&str; 10] = [
    "area_id",
    "year",
    "variable",
    "total",
    "mean",
    "var_total",
    "var_mean",
    "n",
    "population",
    "low_support",
];

/// Survey years supported by the census reconstruction.
pub const SURVEY_YEAR_MIN: i32 = 2011;
pub const SURVEY_YEAR_MAX: i32 = 2023;

type DomainKey = (String, i32);

/// Reconstructs the (area, year) stratum grids from municipal census counts
/// and the sampled farm roster.
pub fn reconstruct_grids(
    census: &[CensusRow],
    xwalk: &arealize::geom::Crosswalk,
    sample: &[SampleRow],
    years: &[i32],
) -> Result<BTreeMap<DomainKey, DomainGrid>> {
    // municipal counts -> area-level census counts per (size, spec, census year)
    let mut census_counts: BTreeMap<(String, SizeClass, SpecClass, i32), f64> = BTreeMap::new();
    let mut areas: BTreeSet<String> = BTreeSet::new();
    for row in census {
        anyhow::ensure!(
            row.year == 2010 || row.year == 2020,
            "census counts must carry year 2010 or 2020, got {}",
            row.year
        );
        let area = xwalk.area_of(&row.municipality_id).with_context(|| {
            format!(
                "municipality {} missing from crosswalk",
                row.municipality_id
            )
        })?;
        areas.insert(area.to_string());
        *census_counts
            .entry((area.to_string(), row.size, row.spec, row.year))
            .or_insert(0.0) += row.count;
    }
    // distinct sampled farms per stratum-year
    let mut farms: BTreeMap<(String, SizeClass, SpecClass, i32), BTreeSet<String>> =
        BTreeMap::new();
    for row in sample {
        areas.insert(row.area_id.clone());
        farms
            .entry((row.area_id.clone(), row.size, row.spec, row.year))
            .or_default()
            .insert(row.farm_id.clone());
    }

    let mut grids: BTreeMap<DomainKey, DomainGrid> = BTreeMap::new();
    for area in &areas {
        for &year in years {
            anyhow::ensure!(
                (SURVEY_YEAR_MIN..=SURVEY_YEAR_MAX).contains(&year),
                "survey year {year} outside the census reconstruction span \
                 {SURVEY_YEAR_MIN}-{SURVEY_YEAR_MAX}"
            );
            let mut grid = DomainGrid::default();
            for size in SizeClass::ALL {
                for spec in SpecClass::ALL {
                    let n2010 = census_counts
                        .get(&(area.clone(), size, spec, 2010))
                        .copied()
                        .unwrap_or(0.0);
                    let n2020 = census_counts
                        .get(&(area.clone(), size, spec, 2020))
                        .copied()
                        .unwrap_or(0.0);
                    let population = interpolate_population(n2010, n2020, year)?;
                    let sampled = farms
                        .get(&(area.clone(), size, spec, year))
                        .map(|s| s.len() as u32)
                        .unwrap_or(0);
                    grid[size.index()][spec.index()] = Cell {
                        population,
                        sample: sampled,
                    };
                }
            }
            grids.insert((area.clone(), year), grid);
        }
    }
    Ok(grids)
}

pub fn run_weights(
    cfg: &RunConfig,
    census_path: &Path,
    crosswalk_path: &Path,
    sample_path: &Path,
) -> Result<()> {
    let census = io::read_census(census_path)?;
    let xwalk = io::read_crosswalk(crosswalk_path)?;
    let sample = io::read_sample(sample_path)?;
    let years: Vec<i32> = (cfg.panel.year_min.max(SURVEY_YEAR_MIN)
        ..=cfg.panel.year_max.min(SURVEY_YEAR_MAX))
        .collect();
    let grids = reconstruct_grids(&census, &xwalk, &sample, &years)?;

    let mut count_rows = Vec::new();
    let mut weight_rows = Vec::new();
    let mut method_tally: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut missing_domains = 0usize;
    // history per area, shared by every year of that area
    let mut history: BTreeMap<String, BTreeMap<i32, DomainGrid>> = BTreeMap::new();
    for ((area, year), grid) in &grids {
        history
            .entry(area.clone())
            .or_default()
            .insert(*year, *grid);
    }
    for ((area, year), grid) in &grids {
        for size in SizeClass::ALL {
            for spec in SpecClass::ALL {
                let cell = grid[size.index()][spec.index()];
                count_rows.push(vec![
                    area.clone(),
                    size.name().to_string(),
                    spec.name().to_string(),
                    year.to_string(),
                    fmt_f64(cell.population),
                    cell.sample.to_string(),
                ]);
            }
        }
        match build_weights(
            area,
            *year,
            grid,
            &history[area],
            cfg.tolerances.rake_tol,
            cfg.tolerances.rake_max_iter,
        )? {
            None => missing_domains += 1,
            Some(dw) => {
                *method_tally.entry(dw.method.name()).or_insert(0) += 1;
                for rec in &dw.records {
                    weight_rows.push(vec![
                        rec.area.clone(),
                        rec.size.name().to_string(),
                        rec.spec.name().to_string(),
                        rec.year.to_string(),
                        fmt_f64(rec.weight),
                        rec.method.name().to_string(),
                        dw.donor_year.map(|y| y.to_string()).unwrap_or_default(),
                    ]);
                }
            }
        }
    }
    let out = &cfg.out_dir;
    table::write(&out.join("stratum_counts.csv"), &COUNTS_HEADER, &count_rows)?;
    table::write(&out.join("weights.csv"), &WEIGHTS_HEADER, &weight_rows)?;
    let mut manifest = Manifest::new("survey-weights", cfg);
    manifest.push(
        "method_tally",
        serde_json::to_value(&method_tally)?,
        "engine",
    );
    manifest.push(
        "missing_domains",
        serde_json::json!(missing_domains),
        "engine",
    );
    manifest.write(out)?;
    Ok(())
}

/// Parsed weight record plus donor year.
fn read_weights(path: &Path) -> Result<Vec<arealize::survey::WeightRecord>> {
    let t = Table::read(path)?;
    let (carea, csize, cspec, cyear, cweight, cmethod) = (
        t.col("area_id")?,
        t.col("size")?,
        t.col("spec")?,
        t.col("year")?,
        t.col("weight")?,
        t.col("method")?,
    );
    t.rows
        .iter()
        .map(|row| {
            let method = match row[cmethod].as_str() {
                "cell" => Method::Cell,
                "rake2d" => Method::Rake2d,
                "rake1d_size" => Method::Rake1dSize,
                "rake1d_spec" => Method::Rake1dSpec,
                "donor" => Method::Donor,
                "uniform" => Method::Uniform,
                other => anyhow::bail!("unknown weighting method {other}"),
            };
            Ok(arealize::survey::WeightRecord {
                area: row[carea].clone(),
                size: SizeClass::parse(&row[csize])?,
                spec: SpecClass::parse(&row[cspec])?,
                year: t.i32(row, cyear)?,
                weight: t.f64(row, cweight)?,
                method,
            })
        })
        .collect()
}

fn read_counts(path: &Path) -> Result<BTreeMap<DomainKey, DomainGrid>> {
    let t = Table::read(path)?;
    let (carea, csize, cspec, cyear, cpop, csample) = (
        t.col("area_id")?,
        t.col("size")?,
        t.col("spec")?,
        t.col("year")?,
        t.col("population")?,
        t.col("sample")?,
    );
    let mut grids: BTreeMap<DomainKey, DomainGrid> = BTreeMap::new();
    for row in &t.rows {
        let size = SizeClass::parse(&row[csize])?;
        let spec = SpecClass::parse(&row[cspec])?;
        let grid = grids
            .entry((row[carea].clone(), t.i32(row, cyear)?))
            .or_default();
        grid[size.index()][spec.index()] = Cell {
            population: t.f64(row, cpop)?,
            sample: t.f64(row, csample)? as u32,
        };
    }
    Ok(grids)
}

pub fn run_estimate(
    cfg: &RunConfig,
    weights_path: &Path,
    counts_path: &Path,
    sample_path: &Path,
) -> Result<()> {
    let weights = read_weights(weights_path)?;
    let grids = read_counts(counts_path)?;
    let sample = io::read_sample(sample_path)?;

    let mut weights_by_domain: BTreeMap<DomainKey, Vec<arealize::survey::WeightRecord>> =
        BTreeMap::new();
    for w in weights {
        weights_by_domain
            .entry((w.area.clone(), w.year))
            .or_default()
            .push(w);
    }
    // (domain, variable) -> stratum -> farm values
    type StratumValues = BTreeMap<(SizeClass, SpecClass), Vec<f64>>;
    let mut values: BTreeMap<(DomainKey, String), StratumValues> = BTreeMap::new();
    for row in &sample {
        values
            .entry(((row.area_id.clone(), row.year), row.variable.clone()))
            .or_default()
            .entry((row.size, row.spec))
            .or_default()
            .push(row.value);
    }

    let mut rows = Vec::new();
    for ((domain, variable), by_stratum) in &values {
        let Some(domain_weights) = weights_by_domain.get(domain) else {
            continue; // unweighted domain: emitted as missing
        };
        let grid = grids
            .get(domain)
            .with_context(|| format!("domain ({}, {}) missing from counts", domain.0, domain.1))?;
        let pop = domain_population(grid);
        let flat: Vec<(SizeClass, SpecClass, f64)> = by_stratum
            .iter()
            .flat_map(|((size, spec), xs)| xs.iter().map(|x| (*size, *spec, *x)))
            .collect();
        let (total, mean) = ht_estimate(domain_weights, &flat, pop)?;
        let (var_total, var_mean, low_support) = design_variance(grid, by_stratum, pop)?;
        rows.push(vec![
            domain.0.clone(),
            domain.1.to_string(),
            variable.clone(),
            fmt_f64(total),
            fmt_f64(mean),
            fmt_f64(var_total),
            fmt_f64(var_mean),
            domain_sample(grid).to_string(),
            fmt_f64(pop),
            (low_support as u8).to_string(),
        ]);
    }
    table::write(&cfg.out_dir.join("estimates.csv"), &ESTIMATES_HEADER, &rows)?;
    Manifest::new("survey-estimate", cfg).write(&cfg.out_dir)?;
    Ok(())
}
