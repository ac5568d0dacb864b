//! Planar spatial primitives: points, polygonal areal units, block
//! discretization, nearest-neighbour search, and the municipality-to-area
//! crosswalk.
//!
//! Geometry is planar Euclidean throughout; coordinates are used in their
//! native unit (geographic degrees or projected metres) and the unit is
//! recorded in the run manifest rather than transformed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sample or discretization location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One closed ring of an areal unit, either the outer boundary or a hole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ring {
    pub points: Vec<Point>,
    pub hole: bool,
}

impl Ring {
    /// Validates closure (first point equals last) and non-degeneracy
    /// (at least three distinct vertices).
    fn validate(&self) -> Result<()> {
        let pts = &self.points;
        if pts.len() < 4 {
            return Err(Error::InvalidGeometry(format!(
                "ring with {} points cannot be closed and non-degenerate",
                pts.len()
            )));
        }
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if first != last {
            return Err(Error::InvalidGeometry(
                "ring is not closed (first point != last point)".into(),
            ));
        }
        let mut distinct: Vec<Point> = Vec::new();
        for p in &pts[..pts.len() - 1] {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidGeometry("non-finite coordinate".into()));
            }
            if !distinct.contains(p) {
                distinct.push(*p);
            }
        }
        if distinct.len() < 3 {
            return Err(Error::InvalidGeometry(
                "ring has fewer than 3 distinct points".into(),
            ));
        }
        Ok(())
    }

    /// Unsigned shoelace area of the ring, anchored at the first vertex so
    /// small polygons far from the origin keep full relative precision.
    fn shoelace(&self) -> f64 {
        let pts = &self.points;
        let origin = pts[0];
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let (ax, ay) = (w[0].x - origin.x, w[0].y - origin.y);
            let (bx, by) = (w[1].x - origin.x, w[1].y - origin.y);
            acc += ax * by - bx * ay;
        }
        (acc / 2.0).abs()
    }
}

/// One areal reporting unit (an ASR): a polygon with optional holes, or a
/// multi-polygon flattened into a ring list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaUnit {
    pub id: String,
    pub rings: Vec<Ring>,
    /// Polygon area in squared coordinate units.
    pub area: f64,
}

impl AreaUnit {
    pub fn new(id: impl Into<String>, rings: Vec<Ring>) -> Result<Self> {
        let mut unit = AreaUnit {
            id: id.into(),
            rings,
            area: 0.0,
        };
        unit.area = polygon_area(&unit)?;
        Ok(unit)
    }

    /// Convenience constructor for a hole-free polygon from an open or
    /// closed point list.
    pub fn from_outer(id: impl Into<String>, mut points: Vec<Point>) -> Result<Self> {
        if let (Some(first), Some(last)) = (points.first().copied(), points.last().copied()) {
            if first != last {
                points.push(first);
            }
        }
        AreaUnit::new(
            id,
            vec![Ring {
                points,
                hole: false,
            }],
        )
    }

    /// Axis-aligned bounding box over all rings.
    pub fn bbox(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for ring in &self.rings {
            for p in &ring.points {
                min.x = min.x.min(p.x);
                min.y = min.y.min(p.y);
                max.x = max.x.max(p.x);
                max.y = max.y.max(p.y);
            }
        }
        (min, max)
    }

    /// Even-odd ray-casting containment test over all rings; points on a
    /// boundary segment count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for w in ring.points.windows(2) {
                let (a, b) = (w[0], w[1]);
                if on_segment(p, &a, &b) {
                    return true;
                }
                if (a.y > p.y) != (b.y > p.y) {
                    let t = (p.y - a.y) / (b.y - a.y);
                    let x_cross = a.x + t * (b.x - a.x);
                    if x_cross > p.x {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

fn on_segment(p: &Point, a: &Point, b: &Point) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if cross.abs() > 1e-12 * a.dist(b).max(1.0) {
        return false;
    }
    let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    dot >= 0.0 && dot <= (b.x - a.x).powi(2) + (b.y - a.y).powi(2)
}

/// Shoelace area of the outer rings minus hole areas. Strictly positive for
/// valid units.
pub fn polygon_area(unit: &AreaUnit) -> Result<f64> {
    if unit.rings.is_empty() {
        return Err(Error::InvalidGeometry("area unit has no rings".into()));
    }
    let mut area = 0.0;
    for ring in &unit.rings {
        ring.validate()?;
        let a = ring.shoelace();
        if ring.hole {
            area -= a;
        } else {
            area += a;
        }
    }
    if area <= 0.0 {
        return Err(Error::InvalidGeometry(format!(
            "unit {} has non-positive area {}",
            unit.id, area
        )));
    }
    Ok(area)
}

/// Discretizes a block into a regular lattice of interior points.
///
/// The lattice step equals `spacing`, offset by `spacing / 2` from the
/// bounding-box corner (cell centres). If fewer than 4 interior points
/// survive the containment filter, the spacing is halved repeatedly, up to
/// ten times.
pub fn discretize_block(unit: &AreaUnit, spacing: f64) -> Result<Vec<Point>> {
    if !(spacing > 0.0) {
        return Err(Error::Domain(format!(
            "spacing must be positive, got {spacing}"
        )));
    }
    if unit.area <= 0.0 {
        return Err(Error::InvalidGeometry(format!(
            "unit {} has zero area",
            unit.id
        )));
    }
    let (min, max) = unit.bbox();
    let mut step = spacing;
    for _ in 0..=10 {
        let pts = lattice_inside(unit, &min, &max, step);
        if pts.len() >= 4 {
            return Ok(pts);
        }
        step /= 2.0;
    }
    // Hard cap reached: accept whatever the finest lattice yields, as long
    // as the block does not degenerate to nothing.
    let pts = lattice_inside(unit, &min, &max, spacing / 1024.0);
    if pts.is_empty() {
        return Err(Error::InvalidGeometry(format!(
            "unit {} admits no interior lattice point",
            unit.id
        )));
    }
    Ok(pts)
}

fn lattice_inside(unit: &AreaUnit, min: &Point, max: &Point, step: f64) -> Vec<Point> {
    let mut pts = Vec::new();
    let nx = ((max.x - min.x) / step).ceil() as usize;
    let ny = ((max.y - min.y) / step).ceil() as usize;
    for iy in 0..ny.max(1) {
        let y = min.y + step / 2.0 + iy as f64 * step;
        if y > max.y {
            break;
        }
        for ix in 0..nx.max(1) {
            let x = min.x + step / 2.0 + ix as f64 * step;
            if x > max.x {
                break;
            }
            let p = Point::new(x, y);
            if unit.contains(&p) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Centroid of a discretization point set.
pub fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    Point::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    )
}

/// Indices of the `min(k, n)` samples nearest to `target`, ordered by
/// distance with ties broken by the lower index.
pub fn knn(samples: &[Point], target: &Point, k: usize) -> Result<Vec<usize>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("knn on empty sample list".into()));
    }
    if k == 0 {
        return Err(Error::Domain("knn requires k >= 1".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&i, &j| {
        samples[i]
            .dist(target)
            .total_cmp(&samples[j].dist(target))
            .then(i.cmp(&j))
    });
    order.truncate(k.min(samples.len()));
    Ok(order)
}

/// One spatial field snapshot: sample locations with values for a given
/// (variable, year, sector) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFieldSnapshot {
    pub variable: String,
    pub year: i32,
    pub sector: Option<String>,
    pub samples: Vec<(Point, f64)>,
}

impl GridFieldSnapshot {
    pub fn new(
        variable: impl Into<String>,
        year: i32,
        sector: Option<String>,
        samples: Vec<(Point, f64)>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("field snapshot with no samples".into()));
        }
        for (p, v) in &samples {
            if !p.x.is_finite() || !p.y.is_finite() || !v.is_finite() {
                return Err(Error::Domain("non-finite sample in field snapshot".into()));
            }
        }
        Ok(GridFieldSnapshot {
            variable: variable.into(),
            year,
            sector,
            samples,
        })
    }

    pub fn points(&self) -> Vec<Point> {
        self.samples.iter().map(|(p, _)| *p).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|(_, v)| *v).collect()
    }

    /// Diagonal length of the sample bounding box.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (p, _) in &self.samples {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        min.dist(&max)
    }

    /// Sample variance (n-1 denominator) of the field values, anchored so
    /// a constant field scores exactly zero.
    pub fn value_variance(&self) -> f64 {
        let vals = self.values();
        if vals.len() < 2 {
            return 0.0;
        }
        let anchor = vals[0];
        let mean = anchor + vals.iter().map(|v| v - anchor).sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
    }
}

/// Time-invariant municipality-to-area mapping. Each municipality belongs to
/// exactly one area; an area may contain many municipalities.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Crosswalk {
    pub entries: BTreeMap<String, String>,
}

impl Crosswalk {
    /// Builds a crosswalk from (municipality, area) pairs, rejecting any
    /// municipality listed under two distinct areas.
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut offenders = Vec::new();
        for (muni, area) in pairs {
            match entries.get(&muni) {
                Some(existing) if *existing != area => offenders.push(muni.clone()),
                _ => {
                    entries.insert(muni, area);
                }
            }
        }
        if !offenders.is_empty() {
            offenders.sort();
            offenders.dedup();
            return Err(Error::Domain(format!(
                "municipalities assigned to multiple areas: {}",
                offenders.join(", ")
            )));
        }
        Ok(Crosswalk { entries })
    }

    pub fn area_of(&self, municipality: &str) -> Option<&str> {
        self.entries.get(municipality).map(String::as_str)
    }
}

/// Reads areal units from a GeoJSON FeatureCollection with Polygon or
/// MultiPolygon geometries. The unit identifier is taken from the `id`
/// property (or the feature-level `id` when the property is absent).
pub fn areas_from_geojson(text: &str) -> Result<Vec<AreaUnit>> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::GeoJson(e.to_string()))?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::GeoJson("missing features array".into()))?;
    let mut units = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, feat) in features.iter().enumerate() {
        let id = feat
            .get("properties")
            .and_then(|p| p.get("id"))
            .or_else(|| feat.get("id"))
            .map(json_id)
            .ok_or_else(|| Error::GeoJson(format!("feature {i} has no id")))?;
        if let Some(prev) = seen.insert(id.clone(), i) {
            return Err(Error::GeoJson(format!(
                "duplicate area id {id} (features {prev} and {i})"
            )));
        }
        let geom = feat
            .get("geometry")
            .ok_or_else(|| Error::GeoJson(format!("feature {id} has no geometry")))?;
        let gtype = geom.get("type").and_then(|t| t.as_str()).unwrap_or("");
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| Error::GeoJson(format!("feature {id} has no coordinates")))?;
        let rings = match gtype {
            "Polygon" => polygon_rings(coords, &id)?,
            "MultiPolygon" => {
                let parts = coords
                    .as_array()
                    .ok_or_else(|| Error::GeoJson(format!("bad MultiPolygon in {id}")))?;
                let mut rings = Vec::new();
                for part in parts {
                    rings.extend(polygon_rings(part, &id)?);
                }
                rings
            }
            other => {
                return Err(Error::GeoJson(format!(
                    "feature {id}: unsupported geometry type {other}"
                )))
            }
        };
        units.push(AreaUnit::new(id, rings)?);
    }
    units.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(units)
}

fn json_id(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn polygon_rings(coords: &serde_json::Value, id: &str) -> Result<Vec<Ring>> {
    let rings = coords
        .as_array()
        .ok_or_else(|| Error::GeoJson(format!("bad Polygon in {id}")))?;
    let mut out = Vec::new();
    for (ri, ring) in rings.iter().enumerate() {
        let pts = ring
            .as_array()
            .ok_or_else(|| Error::GeoJson(format!("bad ring in {id}")))?;
        let mut points = Vec::with_capacity(pts.len());
        for pt in pts {
            let xy = pt
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| Error::GeoJson(format!("bad coordinate in {id}")))?;
            points.push(Point::new(
                xy[0].as_f64().unwrap_or(f64::NAN),
                xy[1].as_f64().unwrap_or(f64::NAN),
            ));
        }
        out.push(Ring {
            points,
            hole: ri > 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> AreaUnit {
        AreaUnit::from_outer(
            "sq",
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn area_of_unit_square() {
        assert_eq!(unit_square().area, 1.0);
    }

    #[test]
    fn area_of_triangle() {
        let tri = AreaUnit::from_outer(
            "tri",
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(tri.area, 0.5);
    }

    #[test]
    fn area_with_hole() {
        let outer = Ring {
            points: vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
                Point::new(0.0, 0.0),
            ],
            hole: false,
        };
        let hole = Ring {
            points: vec![
                Point::new(0.25, 0.25),
                Point::new(0.75, 0.25),
                Point::new(0.75, 0.75),
                Point::new(0.25, 0.75),
                Point::new(0.25, 0.25),
            ],
            hole: true,
        };
        let unit = AreaUnit::new("holed", vec![outer, hole]).unwrap();
        assert!((unit.area - 0.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ring_is_rejected() {
        let unit = AreaUnit::from_outer("bad", vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]);
        assert!(matches!(unit, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn unclosed_ring_is_rejected() {
        let ring = Ring {
            points: vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.5, 0.5),
            ],
            hole: false,
        };
        assert!(AreaUnit::new("open", vec![ring]).is_err());
    }

    #[test]
    fn discretize_unit_square_half_spacing() {
        let pts = discretize_block(&unit_square(), 0.5).unwrap();
        let expect = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
        assert_eq!(pts.len(), 4);
        for (x, y) in expect {
            assert!(pts
                .iter()
                .any(|p| (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12));
        }
    }

    #[test]
    fn discretize_halves_spacing_until_four_points() {
        let pts = discretize_block(&unit_square(), 2.0).unwrap();
        assert!(pts.len() >= 4);
        assert!(pts.iter().all(|p| unit_square().contains(p)));
    }

    #[test]
    fn boundary_points_count_as_inside() {
        let sq = unit_square();
        assert!(sq.contains(&Point::new(0.0, 0.5)));
        assert!(sq.contains(&Point::new(0.5, 1.0)));
        assert!(sq.contains(&Point::new(0.0, 0.0)));
        assert!(!sq.contains(&Point::new(1.2, 0.5)));
    }

    #[test]
    fn knn_basic_and_ties() {
        let samples = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        assert_eq!(knn(&samples, &Point::new(1.0, 0.0), 1).unwrap(), vec![0]);
        // k >= n returns everything ordered by distance
        assert_eq!(knn(&samples, &Point::new(9.0, 0.0), 5).unwrap(), vec![1, 0]);
        // equidistant: lower index wins
        let tied = vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)];
        assert_eq!(knn(&tied, &Point::new(0.0, 0.0), 1).unwrap(), vec![0]);
        assert!(knn(&[], &Point::new(0.0, 0.0), 1).is_err());
    }

    #[test]
    fn crosswalk_rejects_double_assignment() {
        let err = Crosswalk::new(vec![
            ("M1".to_string(), "A".to_string()),
            ("M1".to_string(), "B".to_string()),
        ]);
        assert!(err.is_err());
        let ok = Crosswalk::new(vec![
            ("M1".to_string(), "A".to_string()),
            ("M1".to_string(), "A".to_string()),
            ("M2".to_string(), "A".to_string()),
        ])
        .unwrap();
        assert_eq!(ok.area_of("M2"), Some("A"));
    }

    #[test]
    fn geojson_polygon_and_multipolygon() {
        let text = r#"{
          "type": "FeatureCollection",
          "features": [
            {"type":"Feature","properties":{"id":"A2"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
            {"type":"Feature","properties":{"id":"A1"},
             "geometry":{"type":"MultiPolygon","coordinates":[
               [[[2,0],[3,0],[3,1],[2,1],[2,0]]],
               [[[4,0],[5,0],[5,1],[4,1],[4,0]]]]}}
          ]
        }"#;
        let units = areas_from_geojson(text).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].id, "A1");
        assert!((units[0].area - 2.0).abs() < 1e-12);
        assert_eq!(units[1].id, "A2");
    }
}
