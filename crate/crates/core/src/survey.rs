//! Census-based population reconstruction, calibrated survey weights, and
//! design-based domain estimation.
//!
//! Weights for each (area, year) domain come from a five-level hierarchy:
//! direct cell post-stratification when every populated stratum is sampled,
//! two-dimensional raking on the size and specialization margins,
//! one-dimensional calibration on the better-fitting single margin, temporal
//! donor reconstruction from a nearby year, and finally a uniform domain
//! weight. Every weight record carries the method that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Survey floor: farms below this Standard Output are outside the frame.
pub const STANDARD_OUTPUT_FLOOR_EUR: f64 = 8_000.0;
/// Small/large economic size split on Standard Output.
pub const SIZE_CLASS_SPLIT_EUR: f64 = 100_000.0;

/// Economic size class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 2] = [SizeClass::Small, SizeClass::Large];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of_standard_output(so: f64) -> SizeClass {
        if so < SIZE_CLASS_SPLIT_EUR {
            SizeClass::Small
        } else {
            SizeClass::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::Domain(format!("unknown size class {other}"))),
        }
    }
}

/// Technical specialization class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecClass {
    Crop,
    Livestock,
    Mixed,
}

impl SpecClass {
    pub const ALL: [SpecClass; 3] = [SpecClass::Crop, SpecClass::Livestock, SpecClass::Mixed];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SpecClass::Crop => "crop",
            SpecClass::Livestock => "livestock",
            SpecClass::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crop" => Ok(SpecClass::Crop),
            "livestock" => Ok(SpecClass::Livestock),
            "mixed" => Ok(SpecClass::Mixed),
            other => Err(Error::Domain(format!(
                "unknown specialization class {other}"
            ))),
        }
    }
}

/// Population and sample size of one stratum.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Cell {
    pub population: f64,
    pub sample: u32,
}

/// The 2 x 3 (size x specialization) stratum grid of one (area, year)
/// domain.
pub type DomainGrid = [[Cell; 3]; 2];

/// Full stratum record, the long-format view of a grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumCount {
    pub area: String,
    pub size: SizeClass,
    pub spec: SpecClass,
    pub year: i32,
    pub population: f64,
    pub sample: u32,
}

impl StratumCount {
    pub fn new(
        area: impl Into<String>,
        size: SizeClass,
        spec: SpecClass,
        year: i32,
        population: f64,
        sample: u32,
    ) -> Result<Self> {
        if !(population >= 0.0) {
            return Err(Error::Domain(format!("negative population {population}")));
        }
        if f64::from(sample) > population + 1e-6 {
            return Err(Error::Domain(format!(
                "sample {sample} exceeds population {population}"
            )));
        }
        Ok(StratumCount {
            area: area.into(),
            size,
            spec,
            year,
            population,
            sample,
        })
    }
}

/// Builds the 2 x 3 grid from long-format stratum counts of one domain.
pub fn grid_from_counts(counts: &[StratumCount]) -> DomainGrid {
    let mut grid = DomainGrid::default();
    for c in counts {
        let cell = &mut grid[c.size.index()][c.spec.index()];
        cell.population += c.population;
        cell.sample += c.sample;
    }
    grid
}

pub fn domain_population(grid: &DomainGrid) -> f64 {
    grid.iter().flatten().map(|c| c.population).sum()
}

pub fn domain_sample(grid: &DomainGrid) -> u32 {
    grid.iter().flatten().map(|c| c.sample).sum()
}

/// Reconstructs an annual population count from the two census benchmarks:
/// linear interpolation through 2019, held at the later census from 2020 on,
/// floored at zero.
pub fn interpolate_population(n_2010: f64, n_2020: f64, year: i32) -> Result<f64> {
    if !(2011..=2023).contains(&year) {
        return Err(Error::Domain(format!(
            "population reconstruction covers 2011-2023, got {year}"
        )));
    }
    if !(n_2010 >= 0.0) || !(n_2020 >= 0.0) {
        return Err(Error::Domain("census counts must be non-negative".into()));
    }
    let value = if year <= 2019 {
        n_2010 + (n_2020 - n_2010) * f64::from(year - 2010) / 10.0
    } else {
        n_2020
    };
    Ok(value.max(0.0))
}

/// How a domain's weights were produced, ordered by calibration quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cell,
    Rake2d,
    Rake1dSize,
    Rake1dSpec,
    Donor,
    Uniform,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cell => "cell",
            Method::Rake2d => "rake2d",
            Method::Rake1dSize => "rake1d_size",
            Method::Rake1dSpec => "rake1d_spec",
            Method::Donor => "donor",
            Method::Uniform => "uniform",
        }
    }

    /// Donor-selection quality ordering: cell > rake2d > rake1d > uniform.
    fn quality(self) -> u8 {
        match self {
            Method::Cell => 4,
            Method::Rake2d => 3,
            Method::Rake1dSize | Method::Rake1dSpec => 2,
            Method::Donor | Method::Uniform => 1,
        }
    }
}

/// One calibrated weight, tagged with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightRecord {
    pub area: String,
    pub size: SizeClass,
    pub spec: SpecClass,
    pub year: i32,
    pub weight: f64,
    pub method: Method,
}

/// Weights of one (area, year) domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainWeights {
    pub area: String,
    pub year: i32,
    pub method: Method,
    pub donor_year: Option<i32>,
    pub records: Vec<WeightRecord>,
}

type WeightGrid = [[Option<f64>; 3]; 2];

/// Iterative proportional fitting of the 2 x 3 weight table to the size and
/// specialization margins. Starting from unit weights, rows and columns of
/// the weighted counts are rescaled alternately until both margin residuals
/// fall below `tol`.
pub fn rake_2d(
    n: &[[u32; 3]; 2],
    row_margins: &[f64; 2],
    col_margins: &[f64; 3],
    tol: f64,
    max_iter: usize,
) -> Result<WeightGrid> {
    let row_total: f64 = row_margins.iter().sum();
    let col_total: f64 = col_margins.iter().sum();
    let scale = row_total.abs().max(col_total.abs()).max(1.0);
    if (row_total - col_total).abs() > 1e-6 * scale {
        return Err(Error::MarginMismatch(format!(
            "size margins sum to {row_total}, specialization margins to {col_total}"
        )));
    }
    // every positive margin needs sample support, and a margin of zero
    // cannot carry sampled farms (their weights would vanish)
    for (s, &margin) in row_margins.iter().enumerate() {
        let support: u32 = n[s].iter().sum();
        if margin > 0.0 && support == 0 {
            return Err(Error::InfeasibleSupport(format!(
                "size margin {} has no sampled farm",
                SizeClass::ALL[s].name()
            )));
        }
        if margin <= 0.0 && support > 0 {
            return Err(Error::InfeasibleSupport(format!(
                "sampled farms in size class {} with zero population margin",
                SizeClass::ALL[s].name()
            )));
        }
    }
    for (t, &margin) in col_margins.iter().enumerate() {
        let support: u32 = (0..2).map(|s| n[s][t]).sum();
        if margin > 0.0 && support == 0 {
            return Err(Error::InfeasibleSupport(format!(
                "specialization margin {} has no sampled farm",
                SpecClass::ALL[t].name()
            )));
        }
        if margin <= 0.0 && support > 0 {
            return Err(Error::InfeasibleSupport(format!(
                "sampled farms in specialization {} with zero population margin",
                SpecClass::ALL[t].name()
            )));
        }
    }

    let mut w = [[0.0f64; 3]; 2];
    for s in 0..2 {
        for t in 0..3 {
            if n[s][t] > 0 {
                w[s][t] = 1.0;
            }
        }
    }
    let residual = |w: &[[f64; 3]; 2]| -> f64 {
        let mut r: f64 = 0.0;
        for s in 0..2 {
            let got: f64 = (0..3).map(|t| w[s][t] * f64::from(n[s][t])).sum();
            r = r.max((got - row_margins[s]).abs());
        }
        for t in 0..3 {
            let got: f64 = (0..2).map(|s| w[s][t] * f64::from(n[s][t])).sum();
            r = r.max((got - col_margins[t]).abs());
        }
        r
    };
    let mut converged = false;
    for _ in 0..max_iter {
        for s in 0..2 {
            let cur: f64 = (0..3).map(|t| w[s][t] * f64::from(n[s][t])).sum();
            if cur > 0.0 {
                for t in 0..3 {
                    if n[s][t] > 0 {
                        w[s][t] = w[s][t] * row_margins[s] / cur;
                    }
                }
            }
        }
        for t in 0..3 {
            let cur: f64 = (0..2).map(|s| w[s][t] * f64::from(n[s][t])).sum();
            if cur > 0.0 {
                for s in 0..2 {
                    if n[s][t] > 0 {
                        w[s][t] = w[s][t] * col_margins[t] / cur;
                    }
                }
            }
        }
        if residual(&w) < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RakeDivergence(max_iter));
    }
    let mut out = WeightGrid::default();
    for s in 0..2 {
        for t in 0..3 {
            if n[s][t] > 0 {
                out[s][t] = Some(w[s][t]);
            }
        }
    }
    Ok(out)
}

/// Calibration axis for the one-dimensional fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Size,
    Spec,
}

/// One-dimensional ratio calibration on a single margin. When both axes are
/// feasible, the axis whose weighted counts deviate least (in the maximum
/// absolute sense, over sampled strata) from the reconstructed stratum table
/// wins.
pub fn calibrate_1d(grid: &DomainGrid) -> Result<(WeightGrid, Axis)> {
    let mut best: Option<(f64, Axis, WeightGrid)> = None;
    for axis in [Axis::Size, Axis::Spec] {
        if let Some(w) = calibrate_axis(grid, axis) {
            let mut dev: f64 = 0.0;
            for s in 0..2 {
                for t in 0..3 {
                    if grid[s][t].sample > 0 {
                        let weighted = w[s][t].unwrap_or(0.0) * f64::from(grid[s][t].sample);
                        dev = dev.max((weighted - grid[s][t].population).abs());
                    }
                }
            }
            let better = match &best {
                Some((d, _, _)) => dev < *d,
                None => true,
            };
            if better {
                best = Some((dev, axis, w));
            }
        }
    }
    best.map(|(_, axis, w)| (w, axis))
        .ok_or_else(|| Error::InfeasibleSupport("no margin admits 1-D calibration".into()))
}

fn calibrate_axis(grid: &DomainGrid, axis: Axis) -> Option<WeightGrid> {
    let mut w = WeightGrid::default();
    match axis {
        Axis::Size => {
            for s in 0..2 {
                let margin: f64 = (0..3).map(|t| grid[s][t].population).sum();
                let support: u32 = (0..3).map(|t| grid[s][t].sample).sum();
                if (margin > 0.0) != (support > 0) {
                    return None;
                }
                if support > 0 {
                    let weight = margin / f64::from(support);
                    for t in 0..3 {
                        if grid[s][t].sample > 0 {
                            w[s][t] = Some(weight);
                        }
                    }
                }
            }
        }
        Axis::Spec => {
            for t in 0..3 {
                let margin: f64 = (0..2).map(|s| grid[s][t].population).sum();
                let support: u32 = (0..2).map(|s| grid[s][t].sample).sum();
                if (margin > 0.0) != (support > 0) {
                    return None;
                }
                if support > 0 {
                    let weight = margin / f64::from(support);
                    for s in 0..2 {
                        if grid[s][t].sample > 0 {
                            w[s][t] = Some(weight);
                        }
                    }
                }
            }
        }
    }
    Some(w)
}

fn cell_weights(grid: &DomainGrid) -> Option<WeightGrid> {
    let mut w = WeightGrid::default();
    for s in 0..2 {
        for t in 0..3 {
            let cell = grid[s][t];
            if (cell.population > 0.0) != (cell.sample > 0) {
                return None;
            }
            if cell.sample > 0 {
                w[s][t] = Some(cell.population / f64::from(cell.sample));
            }
        }
    }
    Some(w)
}

/// The direct method the hierarchy would reach for a grid, ignoring the
/// donor level; used to rank donor-year calibration quality.
fn direct_method(grid: &DomainGrid, rake_tol: f64, rake_max_iter: usize) -> Option<Method> {
    if domain_sample(grid) == 0 {
        return None;
    }
    if cell_weights(grid).is_some() {
        return Some(Method::Cell);
    }
    let n = sample_matrix(grid);
    let (rows, cols) = margins(grid);
    if rake_2d(&n, &rows, &cols, rake_tol, rake_max_iter).is_ok() {
        return Some(Method::Rake2d);
    }
    if let Ok((_, axis)) = calibrate_1d(grid) {
        return Some(match axis {
            Axis::Size => Method::Rake1dSize,
            Axis::Spec => Method::Rake1dSpec,
        });
    }
    Some(Method::Uniform)
}

fn sample_matrix(grid: &DomainGrid) -> [[u32; 3]; 2] {
    let mut n = [[0u32; 3]; 2];
    for s in 0..2 {
        for t in 0..3 {
            n[s][t] = grid[s][t].sample;
        }
    }
    n
}

fn margins(grid: &DomainGrid) -> ([f64; 2], [f64; 3]) {
    let mut rows = [0.0; 2];
    let mut cols = [0.0; 3];
    for s in 0..2 {
        for t in 0..3 {
            rows[s] += grid[s][t].population;
            cols[t] += grid[s][t].population;
        }
    }
    (rows, cols)
}

fn records_from(
    area: &str,
    year: i32,
    grid: &DomainGrid,
    w: &WeightGrid,
    method: Method,
) -> Vec<WeightRecord> {
    let mut out = Vec::new();
    for (s, size) in SizeClass::ALL.iter().enumerate() {
        for (t, spec) in SpecClass::ALL.iter().enumerate() {
            if grid[s][t].sample > 0 {
                out.push(WeightRecord {
                    area: area.to_string(),
                    size: *size,
                    spec: *spec,
                    year,
                    weight: w[s][t].expect("sampled stratum must carry a weight"),
                    method,
                });
            }
        }
    }
    out
}

/// Builds the weights of one (area, year) domain through the fallback
/// hierarchy. Returns `None` when the domain has no sampled farm (the
/// domain is emitted as missing downstream).
pub fn build_weights(
    area: &str,
    year: i32,
    grid: &DomainGrid,
    history: &BTreeMap<i32, DomainGrid>,
    rake_tol: f64,
    rake_max_iter: usize,
) -> Result<Option<DomainWeights>> {
    let n_dy = domain_sample(grid);
    if n_dy == 0 {
        return Ok(None);
    }
    let pop_dy = domain_population(grid);
    if !(pop_dy > 0.0) {
        return Err(Error::Domain(format!(
            "domain ({area}, {year}) has sampled farms but zero reconstructed population"
        )));
    }

    // 1. direct cell post-stratification
    if let Some(w) = cell_weights(grid) {
        return Ok(Some(DomainWeights {
            area: area.to_string(),
            year,
            method: Method::Cell,
            donor_year: None,
            records: records_from(area, year, grid, &w, Method::Cell),
        }));
    }

    // 2. two-dimensional raking
    let n = sample_matrix(grid);
    let (rows, cols) = margins(grid);
    if let Ok(w) = rake_2d(&n, &rows, &cols, rake_tol, rake_max_iter) {
        return Ok(Some(DomainWeights {
            area: area.to_string(),
            year,
            method: Method::Rake2d,
            donor_year: None,
            records: records_from(area, year, grid, &w, Method::Rake2d),
        }));
    }

    // 3. one-dimensional calibration
    if let Ok((w, axis)) = calibrate_1d(grid) {
        let method = match axis {
            Axis::Size => Method::Rake1dSize,
            Axis::Spec => Method::Rake1dSpec,
        };
        return Ok(Some(DomainWeights {
            area: area.to_string(),
            year,
            method,
            donor_year: None,
            records: records_from(area, year, grid, &w, method),
        }));
    }

    // 4. temporal donor: nearest year, then best calibration quality, then
    //    most recent year
    let mut candidates: Vec<(i32, u8, i32)> = Vec::new();
    for (&donor_year, donor_grid) in history {
        if donor_year == year {
            continue;
        }
        let total = domain_population(donor_grid);
        if !(total > 0.0) {
            continue;
        }
        // every sampled target stratum needs a positive donor share
        let feasible = (0..2)
            .all(|s| (0..3).all(|t| grid[s][t].sample == 0 || donor_grid[s][t].population > 0.0));
        if !feasible {
            continue;
        }
        let quality = direct_method(donor_grid, rake_tol, rake_max_iter)
            .map(Method::quality)
            .unwrap_or(0);
        candidates.push(((donor_year - year).abs(), quality, donor_year));
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)));
    if let Some(&(_, _, donor_year)) = candidates.first() {
        let donor_grid = &history[&donor_year];
        let donor_total = domain_population(donor_grid);
        let mut w = WeightGrid::default();
        for s in 0..2 {
            for t in 0..3 {
                if grid[s][t].sample > 0 {
                    let share = donor_grid[s][t].population / donor_total;
                    let reconstructed = share * pop_dy;
                    w[s][t] = Some(reconstructed / f64::from(grid[s][t].sample));
                }
            }
        }
        return Ok(Some(DomainWeights {
            area: area.to_string(),
            year,
            method: Method::Donor,
            donor_year: Some(donor_year),
            records: records_from(area, year, grid, &w, Method::Donor),
        }));
    }

    // 5. uniform domain weight
    let weight = pop_dy / f64::from(n_dy);
    let mut w = WeightGrid::default();
    for s in 0..2 {
        for t in 0..3 {
            if grid[s][t].sample > 0 {
                w[s][t] = Some(weight);
            }
        }
    }
    Ok(Some(DomainWeights {
        area: area.to_string(),
        year,
        method: Method::Uniform,
        donor_year: None,
        records: records_from(area, year, grid, &w, Method::Uniform),
    }))
}

/// Per-domain design-based estimate of one variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainEstimate {
    pub area: String,
    pub year: i32,
    pub variable: String,
    pub total: f64,
    pub mean: f64,
    pub var_total: f64,
    pub var_mean: f64,
    pub n_dy: u32,
    pub pop_dy: f64,
    /// Set when some stratum had a single observation, whose variance
    /// contribution is zero by convention and must be regularized downstream.
    pub low_support: bool,
}

/// Horvitz-Thompson estimates of the domain total and mean: the weighted sum
/// of the farm values and its ratio to the domain population.
pub fn ht_estimate(
    weights: &[WeightRecord],
    values: &[(SizeClass, SpecClass, f64)],
    pop_dy: f64,
) -> Result<(f64, f64)> {
    if !(pop_dy > 0.0) {
        return Err(Error::Domain("domain population must be positive".into()));
    }
    let mut lookup: BTreeMap<(SizeClass, SpecClass), f64> = BTreeMap::new();
    for w in weights {
        lookup.insert((w.size, w.spec), w.weight);
    }
    let mut total = 0.0;
    for (size, spec, x) in values {
        let w = lookup.get(&(*size, *spec)).ok_or_else(|| {
            Error::UnweightedObservation(format!("({}, {})", size.name(), spec.name()))
        })?;
        total += w * x;
    }
    Ok((total, total / pop_dy))
}

/// Stratified design variance of the Horvitz-Thompson total with finite
/// population correction:
///
/// ```text
/// Var(T) = Σ_st N² (1 − n/N) S² / n
/// ```
///
/// Strata sampled exhaustively contribute exactly zero; single-observation
/// strata contribute zero with a low-support flag (their uncertainty is
/// supplied by the variance model downstream). The mean variance is
/// Var(T) / N_dy².
pub fn design_variance(
    grid: &DomainGrid,
    values: &BTreeMap<(SizeClass, SpecClass), Vec<f64>>,
    pop_dy: f64,
) -> Result<(f64, f64, bool)> {
    if !(pop_dy > 0.0) {
        return Err(Error::Domain("domain population must be positive".into()));
    }
    let mut var_total = 0.0;
    let mut low_support = false;
    for ((size, spec), xs) in values {
        let cell = grid[size.index()][spec.index()];
        let n = xs.len();
        if n != cell.sample as usize {
            return Err(Error::Domain(format!(
                "stratum ({}, {}) has {} values but sample count {}",
                size.name(),
                spec.name(),
                n,
                cell.sample
            )));
        }
        if n == 0 {
            continue;
        }
        let pop = cell.population;
        if (pop - n as f64).abs() < 1e-9 {
            continue; // exhaustive stratum: FPC zeroes the term exactly
        }
        if n == 1 {
            low_support = true;
            continue;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let fpc = (1.0 - n as f64 / pop).max(0.0);
        var_total += pop * pop * fpc * s2 / n as f64;
    }
    let var_mean = var_total / (pop_dy * pop_dy);
    Ok((var_total, var_mean, low_support))
}
