//! Non-geostatistical spatial harmonization: crosswalk aggregation, raster
//! reclassification, area shares, elevation bands, and piecewise-constant
//! expansion of snapshot datasets over the panel years.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Crosswalk;

/// Crosswalk aggregation method for municipal indicators: counts and totals
/// are summed, rates and indices averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggMethod {
    Sum,
    Mean,
}

/// Aggregates municipal records to areas through the crosswalk. Records are
/// (municipality, value) pairs; a municipality may appear in several records
/// (they accumulate under both methods, the mean dividing by the record
/// count). Areas without any contributing record are absent from the output.
pub fn aggregate_crosswalk(
    records: &[(String, f64)],
    xwalk: &Crosswalk,
    method: AggMethod,
) -> Result<BTreeMap<String, f64>> {
    let mut unmapped: Vec<String> = records
        .iter()
        .filter(|(muni, _)| xwalk.area_of(muni).is_none())
        .map(|(muni, _)| muni.clone())
        .collect();
    if !unmapped.is_empty() {
        unmapped.sort();
        unmapped.dedup();
        return Err(Error::UnmappedUnit(unmapped.join(", ")));
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (muni, value) in records {
        let area = xwalk.area_of(muni).expect("checked above");
        let entry = sums.entry(area.to_string()).or_insert((0.0, 0));
        entry.0 += value;
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(area, (sum, count))| {
            let v = match method {
                AggMethod::Sum => sum,
                AggMethod::Mean => sum / count as f64,
            };
            (area, v)
        })
        .collect())
}

/// Mapping from original map classes to the harmonized class scheme. Every
/// original code maps to exactly one harmonized code.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReclassTable {
    pub entries: BTreeMap<String, String>,
}

impl ReclassTable {
    /// Builds the table from (original, harmonized) pairs, rejecting an
    /// original code listed with two different targets.
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (orig, harm) in pairs {
            match entries.get(&orig) {
                Some(existing) if *existing != harm => {
                    return Err(Error::Domain(format!(
                        "class {orig} mapped to both {existing} and {harm}"
                    )));
                }
                _ => {
                    entries.insert(orig, harm);
                }
            }
        }
        Ok(ReclassTable { entries })
    }
}

/// Relabels map cells into the harmonized scheme. The cell count is
/// preserved; any code absent from the table aborts with the full offender
/// list.
pub fn reclassify<T: Clone>(
    cells: &[(T, String)],
    table: &ReclassTable,
) -> Result<Vec<(T, String)>> {
    let mut unknown: Vec<String> = cells
        .iter()
        .filter(|(_, code)| !table.entries.contains_key(code))
        .map(|(_, code)| code.clone())
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::UnmappedClass(unknown.join(", ")));
    }
    Ok(cells
        .iter()
        .map(|(cell, code)| (cell.clone(), table.entries[code].clone()))
        .collect())
}

/// Converts per-class cell counts into percentage shares of the unit area.
/// The covered area may not exceed the unit area (beyond rounding).
pub fn area_shares(
    class_cells: &BTreeMap<String, u64>,
    cell_area: f64,
    area_total: f64,
) -> Result<BTreeMap<String, f64>> {
    if !(cell_area > 0.0) || !(area_total > 0.0) {
        return Err(Error::Domain(format!(
            "cell_area and area_total must be positive (got {cell_area}, {area_total})"
        )));
    }
    let covered: f64 = class_cells.values().map(|&c| c as f64 * cell_area).sum();
    if covered > area_total * (1.0 + 1e-6) {
        return Err(Error::CoverageOverflow(format!(
            "covered {covered} exceeds unit area {area_total}"
        )));
    }
    Ok(class_cells
        .iter()
        .map(|(code, &count)| (code.clone(), 100.0 * count as f64 * cell_area / area_total))
        .collect())
}

/// Shares of elevation values falling into the plain / hill / mountain
/// bands. Boundaries are closed on the left band: a value at the first
/// threshold is a plain, a value at the second is a hill.
pub fn elevation_band_shares(
    dem_values: &[f64],
    thresholds: (f64, f64),
) -> Result<(f64, f64, f64)> {
    if dem_values.is_empty() {
        return Err(Error::EmptyInput("elevation shares on empty sample".into()));
    }
    let (t_plain, t_hill) = thresholds;
    let mut counts = [0usize; 3];
    for &v in dem_values {
        if v <= t_plain {
            counts[0] += 1;
        } else if v <= t_hill {
            counts[1] += 1;
        } else {
            counts[2] += 1;
        }
    }
    let n = dem_values.len() as f64;
    Ok((
        100.0 * counts[0] as f64 / n,
        100.0 * counts[1] as f64 / n,
        100.0 * counts[2] as f64 / n,
    ))
}

/// Assignment of sparse snapshot years (e.g. land cover maps) to ranges of
/// panel years under a piecewise-constant assumption.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SnapshotSchedule {
    /// snapshot year -> inclusive (first, last) target year.
    pub snapshots: BTreeMap<i32, (i32, i32)>,
}

impl SnapshotSchedule {
    pub fn new(snapshots: impl IntoIterator<Item = (i32, (i32, i32))>) -> Result<Self> {
        let snapshots: BTreeMap<i32, (i32, i32)> = snapshots.into_iter().collect();
        let mut ranges: Vec<(i32, i32)> = snapshots.values().copied().collect();
        ranges.sort();
        for (lo, hi) in &ranges {
            if lo > hi {
                return Err(Error::Domain(format!("empty snapshot range {lo}-{hi}")));
            }
        }
        for w in ranges.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::Domain(format!(
                    "overlapping snapshot ranges {:?} and {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(SnapshotSchedule { snapshots })
    }

    /// The unique snapshot year applicable to `target_year`.
    pub fn expand_piecewise(&self, target_year: i32) -> Result<i32> {
        self.snapshots
            .iter()
            .find(|(_, (lo, hi))| (*lo..=*hi).contains(&target_year))
            .map(|(snap, _)| *snap)
            .ok_or(Error::ScheduleGap(target_year))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xwalk() -> Crosswalk {
        Crosswalk::new(vec![
            ("M1".to_string(), "A".to_string()),
            ("M2".to_string(), "A".to_string()),
            ("M3".to_string(), "B".to_string()),
        ])
        .unwrap()
    }

    #[test]
    fn crosswalk_sum_and_mean() {
        let records = vec![("M1".to_string(), 100.0), ("M2".to_string(), 250.0)];
        let sums = aggregate_crosswalk(&records, &xwalk(), AggMethod::Sum).unwrap();
        assert_eq!(sums["A"], 350.0);
        assert!(!sums.contains_key("B"));
        let rates = vec![("M1".to_string(), 10.0), ("M2".to_string(), 20.0)];
        let means = aggregate_crosswalk(&rates, &xwalk(), AggMethod::Mean).unwrap();
        assert_eq!(means["A"], 15.0);
    }

    #[test]
    fn crosswalk_sum_is_additive_over_split_records() {
        let whole = vec![("M1".to_string(), 30.0)];
        let split = vec![("M1".to_string(), 12.0), ("M1".to_string(), 18.0)];
        let a = aggregate_crosswalk(&whole, &xwalk(), AggMethod::Sum).unwrap();
        let b = aggregate_crosswalk(&split, &xwalk(), AggMethod::Sum).unwrap();
        assert_eq!(a["A"], b["A"]);
    }

    #[test]
    fn crosswalk_rejects_unmapped_municipality() {
        let records = vec![("M9".to_string(), 1.0)];
        let err = aggregate_crosswalk(&records, &xwalk(), AggMethod::Sum);
        match err {
            Err(Error::UnmappedUnit(list)) => assert!(list.contains("M9")),
            other => panic!("expected unmapped-unit error, got {other:?}"),
        }
    }

    #[test]
    fn reclassify_maps_and_preserves_count() {
        let table = ReclassTable::new(vec![
            ("211".to_string(), "ArableLand".to_string()),
            ("212".to_string(), "ArableLand".to_string()),
            ("213".to_string(), "ArableLand".to_string()),
        ])
        .unwrap();
        let cells = vec![
            ("c1".to_string(), "211".to_string()),
            ("c2".to_string(), "212".to_string()),
            ("c3".to_string(), "213".to_string()),
        ];
        let out = reclassify(&cells, &table).unwrap();
        assert_eq!(out.len(), cells.len());
        assert!(out.iter().all(|(_, code)| code == "ArableLand"));
        assert!(reclassify(&[("c".to_string(), "999".to_string())], &table).is_err());
        let empty: Vec<(String, String)> = vec![];
        assert!(reclassify(&empty, &table).unwrap().is_empty());
    }

    #[test]
    fn shares_tessellating_area() {
        let mut cells = BTreeMap::new();
        cells.insert("arable".to_string(), 4u64);
        let shares = area_shares(&cells, 0.25, 1.0).unwrap();
        assert!((shares["arable"] - 100.0).abs() < 1e-12);
        let mut two = BTreeMap::new();
        two.insert("a".to_string(), 3u64);
        two.insert("b".to_string(), 1u64);
        let shares = area_shares(&two, 0.25, 1.0).unwrap();
        assert_eq!((shares["a"], shares["b"]), (75.0, 25.0));
    }

    #[test]
    fn shares_reject_coverage_overflow() {
        let mut cells = BTreeMap::new();
        cells.insert("a".to_string(), 5u64);
        assert!(matches!(
            area_shares(&cells, 0.25, 1.0),
            Err(Error::CoverageOverflow(_))
        ));
    }

    #[test]
    fn shares_are_scale_invariant() {
        let mut cells = BTreeMap::new();
        cells.insert("a".to_string(), 7u64);
        cells.insert("b".to_string(), 3u64);
        let s1 = area_shares(&cells, 0.5, 10.0).unwrap();
        let s2 = area_shares(&cells, 1.0, 20.0).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn elevation_bands_with_boundary_values() {
        let (p, h, m) =
            elevation_band_shares(&[100.0, 300.0, 700.0, 150.0], (200.0, 600.0)).unwrap();
        assert_eq!((p, h, m), (50.0, 25.0, 25.0));
        let (p, h, _) = elevation_band_shares(&[200.0], (200.0, 600.0)).unwrap();
        assert_eq!((p, h), (100.0, 0.0));
        let (_, h, m) = elevation_band_shares(&[600.0], (200.0, 600.0)).unwrap();
        assert_eq!((h, m), (100.0, 0.0));
        let (p, h, m) = elevation_band_shares(&[1000.0, 1000.0], (200.0, 600.0)).unwrap();
        assert_eq!((p, h, m), (0.0, 0.0, 100.0));
    }

    #[test]
    fn band_shares_sum_to_hundred() {
        let vals: Vec<f64> = (0..37).map(|i| i as f64 * 33.3).collect();
        let (p, h, m) = elevation_band_shares(&vals, (200.0, 600.0)).unwrap();
        assert!((p + h + m - 100.0).abs() < 1e-9);
    }

    #[test]
    fn piecewise_schedule_lookup() {
        let two_snapshots =
            SnapshotSchedule::new(vec![(2012, (2011, 2017)), (2018, (2018, 2024))]).unwrap();
        assert_eq!(two_snapshots.expand_piecewise(2014).unwrap(), 2012);
        assert_eq!(two_snapshots.expand_piecewise(2018).unwrap(), 2018);
        assert!(matches!(
            two_snapshots.expand_piecewise(2010),
            Err(Error::ScheduleGap(2010))
        ));

        let annual_with_flanks = SnapshotSchedule::new(vec![
            (2015, (2011, 2015)),
            (2016, (2016, 2016)),
            (2017, (2017, 2017)),
            (2018, (2018, 2018)),
            (2019, (2019, 2024)),
        ])
        .unwrap();
        assert_eq!(annual_with_flanks.expand_piecewise(2022).unwrap(), 2019);
        assert_eq!(annual_with_flanks.expand_piecewise(2013).unwrap(), 2015);
        assert_eq!(annual_with_flanks.expand_piecewise(2016).unwrap(), 2016);
    }

    #[test]
    fn overlapping_schedule_is_rejected() {
        assert!(SnapshotSchedule::new(vec![(2012, (2011, 2018)), (2018, (2018, 2024))]).is_err());
    }
}
