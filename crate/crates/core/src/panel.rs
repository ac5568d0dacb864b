//! Final panel assembly over the area x year grid, missing-data accounting,
//! and the validation rule battery.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One long-format panel observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelCell {
    pub area_id: String,
    pub year: i32,
    pub variable: String,
    pub value: Option<f64>,
}

/// A long-format table produced by one pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fragment {
    pub source: String,
    pub cells: Vec<PanelCell>,
}

/// Column identity inside the assembled panel, ordered by (source,
/// variable).
pub type ColumnKey = (String, String);

/// Values of one column over the (area, year) grid.
pub type ColumnValues = BTreeMap<(String, i32), f64>;

/// The assembled panel: a full area x year grid with one value map per
/// (source, variable) column. Absent combinations are missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    /// Sorted areal unit roster.
    pub area_ids: Vec<String>,
    /// Inclusive year span.
    pub years: (i32, i32),
    pub columns: BTreeMap<ColumnKey, ColumnValues>,
}

impl Panel {
    /// Panel years supported by the study design.
    pub const YEAR_BOUNDS: (i32, i32) = (2011, 2024);

    /// Creates an empty panel over a fixed roster and span.
    pub fn new(mut area_ids: Vec<String>, years: (i32, i32)) -> Result<Self> {
        if area_ids.is_empty() {
            return Err(Error::EmptyInput("panel with no areal units".into()));
        }
        if years.0 > years.1 {
            return Err(Error::Domain(format!(
                "empty year span {}..{}",
                years.0, years.1
            )));
        }
        if years.0 < Self::YEAR_BOUNDS.0 || years.1 > Self::YEAR_BOUNDS.1 {
            return Err(Error::Domain(format!(
                "panel span {}..{} outside the supported years {}..{}",
                years.0,
                years.1,
                Self::YEAR_BOUNDS.0,
                Self::YEAR_BOUNDS.1
            )));
        }
        area_ids.sort();
        area_ids.dedup();
        Ok(Panel {
            area_ids,
            years,
            columns: BTreeMap::new(),
        })
    }

    /// Full-join merge of fragments keyed by (area, year, variable). The
    /// same variable may not be supplied twice for one key, whatever the
    /// sources; unknown areas and out-of-span years are rejected.
    pub fn assemble(&mut self, fragments: &[Fragment]) -> Result<()> {
        // variable -> source of first sighting, to name both ends of a
        // cross-source collision
        let mut owners: BTreeMap<(String, String, i32), String> = BTreeMap::new();
        for (key, vals) in &self.columns {
            for (area, year) in vals.keys() {
                owners.insert((key.1.clone(), area.clone(), *year), key.0.clone());
            }
        }
        for frag in fragments {
            for cell in &frag.cells {
                if self.area_ids.binary_search(&cell.area_id).is_err() {
                    return Err(Error::Domain(format!(
                        "fragment {} references unknown area {}",
                        frag.source, cell.area_id
                    )));
                }
                if cell.year < self.years.0 || cell.year > self.years.1 {
                    return Err(Error::Domain(format!(
                        "fragment {} year {} outside panel span {}..{}",
                        frag.source, cell.year, self.years.0, self.years.1
                    )));
                }
                let owner_key = (cell.variable.clone(), cell.area_id.clone(), cell.year);
                if let Some(other) = owners.get(&owner_key) {
                    return Err(Error::PanelCollision {
                        variable: cell.variable.clone(),
                        area_id: cell.area_id.clone(),
                        year: cell.year,
                        source_a: other.clone(),
                        source_b: frag.source.clone(),
                    });
                }
                owners.insert(owner_key, frag.source.clone());
                if let Some(v) = cell.value {
                    self.columns
                        .entry((frag.source.clone(), cell.variable.clone()))
                        .or_default()
                        .insert((cell.area_id.clone(), cell.year), v);
                } else {
                    // declare the column even when the value is missing
                    self.columns
                        .entry((frag.source.clone(), cell.variable.clone()))
                        .or_default();
                }
            }
        }
        Ok(())
    }

    pub fn year_list(&self) -> Vec<i32> {
        (self.years.0..=self.years.1).collect()
    }

    pub fn value(&self, source_variable: &ColumnKey, area: &str, year: i32) -> Option<f64> {
        self.columns
            .get(source_variable)?
            .get(&(area.to_string(), year))
            .copied()
    }

    /// Looks a variable up by name across sources.
    pub fn column(&self, variable: &str) -> Option<(&ColumnKey, &ColumnValues)> {
        self.columns.iter().find(|((_, v), _)| v == variable)
    }

    /// Re-exports the panel as one fragment per source; assembling these
    /// into a fresh panel reproduces the original.
    pub fn to_fragments(&self) -> Vec<Fragment> {
        let mut by_source: BTreeMap<String, Vec<PanelCell>> = BTreeMap::new();
        for ((source, variable), vals) in &self.columns {
            let cells = by_source.entry(source.clone()).or_default();
            for ((area, year), v) in vals {
                cells.push(PanelCell {
                    area_id: area.clone(),
                    year: *year,
                    variable: variable.clone(),
                    value: Some(*v),
                });
            }
        }
        by_source
            .into_iter()
            .map(|(source, cells)| Fragment { source, cells })
            .collect()
    }
}

/// Per (source, variable, year) coverage accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingRow {
    pub source: String,
    pub variable: String,
    pub year: i32,
    pub present: usize,
    pub missing: usize,
}

/// Counts present and missing areas for every column and year; totals
/// reconcile with the panel dimensions by construction.
pub fn missing_report(panel: &Panel) -> Vec<MissingRow> {
    let m = panel.area_ids.len();
    let mut out = Vec::new();
    for ((source, variable), vals) in &panel.columns {
        for year in panel.year_list() {
            let present = panel
                .area_ids
                .iter()
                .filter(|a| vals.contains_key(&((*a).clone(), year)))
                .count();
            out.push(MissingRow {
                source: source.clone(),
                variable: variable.clone(),
                year,
                present,
                missing: m - present,
            });
        }
    }
    out
}

/// Validation rule set; all thresholds are explicit so a run manifest can
/// reproduce the battery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSet {
    /// variable -> (exclusive lower bound, inclusive upper bound).
    pub bounded: Vec<(String, f64, f64)>,
    pub nonnegative: Vec<String>,
    /// Named groups of share variables that must sum to the target within
    /// the tolerance wherever every member is present.
    pub share_groups: Vec<ShareGroup>,
    /// (warmer variable, colder variable): per area-year the first may not
    /// fall below the second.
    pub seasonal_order: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShareGroup {
    pub name: String,
    pub variables: Vec<String>,
    pub target: f64,
    pub tolerance: f64,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            bounded: vec![
                ("rh_mean".into(), 0.0, 100.0),
                ("rh_min".into(), 0.0, 100.0),
                ("rh_max".into(), 0.0, 100.0),
            ],
            nonnegative: ["tp", "sf", "ro", "sro", "ssro"]
                .iter()
                .flat_map(|v| [format!("{v}_mean"), format!("{v}_sum"), format!("{v}_min")])
                .collect(),
            share_groups: Vec::new(),
            seasonal_order: vec![("t2m_mean_summer".into(), "t2m_mean_winter".into())],
        }
    }
}

/// One rule violation; validation never mutates the panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub area_id: String,
    pub year: i32,
    pub variable: String,
    pub detail: String,
}

/// Evaluates the rule battery over the panel.
pub fn validate(panel: &Panel, rules: &RuleSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (variable, lo, hi) in &rules.bounded {
        if let Some((_, vals)) = panel.column(variable) {
            for ((area, year), v) in vals {
                if !(v > lo && v <= hi) {
                    out.push(Violation {
                        rule: "bounded".into(),
                        area_id: area.clone(),
                        year: *year,
                        variable: variable.clone(),
                        detail: format!("{v} outside ({lo}, {hi}]"),
                    });
                }
            }
        }
    }
    for variable in &rules.nonnegative {
        if let Some((_, vals)) = panel.column(variable) {
            for ((area, year), v) in vals {
                if *v < 0.0 {
                    out.push(Violation {
                        rule: "nonnegative".into(),
                        area_id: area.clone(),
                        year: *year,
                        variable: variable.clone(),
                        detail: format!("negative value {v}"),
                    });
                }
            }
        }
    }
    for group in &rules.share_groups {
        let columns: Vec<_> = group
            .variables
            .iter()
            .filter_map(|v| panel.column(v).map(|(_, vals)| vals))
            .collect();
        if columns.len() != group.variables.len() {
            continue;
        }
        for area in &panel.area_ids {
            for year in panel.year_list() {
                let values: Vec<Option<f64>> = columns
                    .iter()
                    .map(|vals| vals.get(&(area.clone(), year)).copied())
                    .collect();
                if values.iter().any(Option::is_none) {
                    continue;
                }
                let sum: f64 = values.iter().map(|v| v.unwrap()).sum();
                if (sum - group.target).abs() > group.tolerance {
                    out.push(Violation {
                        rule: "share-sum".into(),
                        area_id: area.clone(),
                        year,
                        variable: group.name.clone(),
                        detail: format!("shares sum to {sum}, expected {}", group.target),
                    });
                }
            }
        }
    }
    for (warm, cold) in &rules.seasonal_order {
        let (Some((_, wv)), Some((_, cv))) = (panel.column(warm), panel.column(cold)) else {
            continue;
        };
        for ((area, year), w) in wv {
            if let Some(c) = cv.get(&(area.clone(), *year)) {
                if w < c {
                    out.push(Violation {
                        rule: "seasonal-order".into(),
                        area_id: area.clone(),
                        year: *year,
                        variable: warm.clone(),
                        detail: format!("{warm}={w} below {cold}={c}"),
                    });
                }
            }
        }
    }
    out
}

/// Pearson linear correlation; NaN for degenerate inputs.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.is_empty() {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Interpolation-fidelity check: the correlation between model values
/// re-evaluated at the source cells and the source values must reach the
/// threshold.
pub fn fidelity_violation(
    observed: &[f64],
    predicted: &[f64],
    threshold: f64,
    label: &str,
) -> Option<Violation> {
    let r = pearson(observed, predicted);
    if r.is_nan() || r >= threshold {
        None
    } else {
        Some(Violation {
            rule: "interpolation-fidelity".into(),
            area_id: String::new(),
            year: 0,
            variable: label.to_string(),
            detail: format!("correlation {r:.4} below threshold {threshold}"),
        })
    }
}
