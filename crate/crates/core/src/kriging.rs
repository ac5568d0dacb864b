//! Ordinary point and block kriging.
//!
//! The block mean predictor is the BLUP Ŷ_V = Σ α_i Y(s_i) with weights from
//! the constrained system
//!
//! ```text
//! [ C   1 ] [ α ]   [ c_V ]
//! [ 1ᵀ  0 ] [ λ ] = [  1  ]
//! ```
//!
//! where C holds point-to-point covariances among the neighbours and c_V the
//! point-to-block covariances. Block covariances are discretized: C(s, V) is
//! the arithmetic mean of the point covariances from s to the block's
//! representative points, and C(V, V) the double average over all ordered
//! point pairs. The prediction variance is the quadratic form
//! Var(Y_V − Ŷ_V) = C(V,V) − 2αᵀc_V + αᵀCα, which under the system above
//! reduces to C(V,V) − αᵀc_V − λ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{centroid, discretize_block, knn, AreaUnit, GridFieldSnapshot, Point};
use crate::linalg::{self, Matrix};
use crate::variogram::VariogramSpec;

/// Variances within this tolerance below zero are clamped to zero; anything
/// more negative indicates an inconsistent covariance model and is an error.
pub const VARIANCE_CLAMP_TOL: f64 = 1e-9;

/// Result of one block prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockPrediction {
    pub area_id: String,
    /// Predicted block mean Ŷ_V.
    pub mean: f64,
    /// Kriging prediction variance, clamped at zero within tolerance.
    pub variance: f64,
    /// Number of neighbours actually used.
    pub n_used: usize,
    pub family: String,
    pub nmax: usize,
    /// Cross-validated RMSE of the configuration that produced this
    /// prediction (diagnostic; NaN when not tuned).
    pub cv_rmse: f64,
}

/// Mean of the point-to-point covariances between `s` and the block's
/// discretization points.
pub fn point_to_block_cov(spec: &VariogramSpec, s: &Point, block_points: &[Point]) -> Result<f64> {
    if block_points.is_empty() {
        return Err(Error::EmptyInput(
            "point-to-block covariance with no block points".into(),
        ));
    }
    let sum: f64 = block_points.iter().map(|u| spec.cov(s.dist(u))).sum();
    Ok(sum / block_points.len() as f64)
}

/// Double average of point covariances over all ordered pairs of block
/// discretization points, including the i = j terms at C(0).
pub fn block_to_block_cov(spec: &VariogramSpec, block_points: &[Point]) -> Result<f64> {
    if block_points.is_empty() {
        return Err(Error::EmptyInput(
            "block-to-block covariance with no block points".into(),
        ));
    }
    let n = block_points.len();
    let mut sum = n as f64 * spec.sill(); // diagonal terms C(0)
    for i in 0..n {
        for j in i + 1..n {
            sum += 2.0 * spec.cov(block_points[i].dist(&block_points[j]));
        }
    }
    Ok(sum / (n as f64 * n as f64))
}

/// Solves the ordinary kriging system for weights and Lagrange multiplier.
/// The augmented matrix is built from the covariance matrix `c` (n x n,
/// symmetric) and the target covariance vector `c_target`.
pub fn solve_ordinary_kriging(c: &Matrix, c_target: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = c.n;
    if n == 0 || c_target.len() != n {
        return Err(Error::EmptyInput("kriging system of dimension 0".into()));
    }
    let mut aug = Matrix::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            aug.set(i, j, c.get(i, j));
        }
        aug.set(i, n, 1.0);
        aug.set(n, i, 1.0);
    }
    let mut rhs = Vec::with_capacity(n + 1);
    rhs.extend_from_slice(c_target);
    rhs.push(1.0);
    let sol = linalg::solve(aug, rhs)?;
    let lambda = sol[n];
    let alpha = sol[..n].to_vec();
    Ok((alpha, lambda))
}

/// Neighbourhood prepared for one kriging solve: deduplicated sample
/// locations with averaged values.
struct Neighbourhood {
    points: Vec<Point>,
    values: Vec<f64>,
}

/// Equal-weight mean, anchored for bitwise exactness on constant inputs.
fn local_mean(vals: &[f64]) -> f64 {
    let anchor = vals[0];
    anchor + vals.iter().map(|v| v - anchor).sum::<f64>() / vals.len() as f64
}

/// Averages values at coincident sample locations so the covariance matrix
/// stays invertible before any jitter is attempted.
fn dedup_samples(samples: &[(Point, f64)]) -> Neighbourhood {
    let mut points: Vec<Point> = Vec::with_capacity(samples.len());
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for (p, v) in samples {
        match points.iter().position(|q| q == p) {
            Some(k) => {
                sums[k] += *v;
                counts[k] += 1;
            }
            None => {
                points.push(*p);
                sums.push(*v);
                counts.push(1);
            }
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s / f64::from(*c))
        .collect();
    Neighbourhood { points, values }
}

/// Builds the neighbour correlation matrix (covariances over the sill), so
/// the augmented system is uniformly scaled whatever the data magnitude.
fn corr_matrix(spec: &VariogramSpec, points: &[Point], jitter: f64) -> Matrix {
    let n = points.len();
    let sill = spec.sill();
    let mut c = Matrix::zeros(n);
    for i in 0..n {
        c.set(i, i, 1.0 + jitter);
        for j in i + 1..n {
            let v = spec.cov(points[i].dist(&points[j])) / sill;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    c
}

/// Solves the system for a neighbourhood and target covariance vector on the
/// correlation scale, retrying once with a small diagonal jitter
/// (10^-10 of the sill) when the plain system is singular. The weights are
/// scale-invariant; the multiplier is mapped back to the covariance scale.
fn solve_with_retry(
    spec: &VariogramSpec,
    points: &[Point],
    c_target: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let sill = spec.sill();
    let scaled: Vec<f64> = c_target.iter().map(|c| c / sill).collect();
    let solved = match solve_ordinary_kriging(&corr_matrix(spec, points, 0.0), &scaled) {
        Ok(sol) => sol,
        Err(Error::SingularSystem(_)) => {
            solve_ordinary_kriging(&corr_matrix(spec, points, 1e-10), &scaled)?
        }
        Err(e) => return Err(e),
    };
    debug_assert!(
        (solved.0.iter().sum::<f64>() - 1.0).abs() < 1e-10,
        "unbiasedness constraint violated by the solve"
    );
    Ok((solved.0, solved.1 * sill))
}

/// Finishes a prediction: anchored mean, variance clamp.
fn finish(
    alpha: &[f64],
    lambda: f64,
    values: &[f64],
    c_target: &[f64],
    target_var: f64,
) -> Result<(f64, f64)> {
    // Σα = 1, so predicting deviations from an anchor value is algebraically
    // identical and bitwise exact on constant fields.
    let anchor = values[0];
    let mean = anchor
        + alpha
            .iter()
            .zip(values)
            .map(|(a, v)| a * (v - anchor))
            .sum::<f64>();
    let alpha_c: f64 = alpha.iter().zip(c_target).map(|(a, c)| a * c).sum();
    let variance = target_var - alpha_c - lambda;
    let variance = if variance < 0.0 {
        if variance < -VARIANCE_CLAMP_TOL {
            return Err(Error::NumericalFailure(format!(
                "kriging variance {variance:.3e} below clamp tolerance"
            )));
        }
        0.0
    } else {
        variance
    };
    Ok((mean, variance))
}

/// Ordinary point kriging at `target` using the `nmax` nearest samples.
/// Returns (mean, variance, n_used).
pub fn predict_point(
    samples: &[(Point, f64)],
    target: &Point,
    spec: &VariogramSpec,
    nmax: usize,
) -> Result<(f64, f64, usize)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("point prediction on empty field".into()));
    }
    if nmax == 0 {
        return Err(Error::Domain("nmax must be >= 1".into()));
    }
    let hood = dedup_samples(samples);
    let idx = knn(&hood.points, target, nmax)?;
    let vals: Vec<f64> = idx.iter().map(|&i| hood.values[i]).collect();
    if spec.sill() <= 0.0 {
        return Ok((local_mean(&vals), 0.0, vals.len()));
    }
    let pts: Vec<Point> = idx.iter().map(|&i| hood.points[i]).collect();
    let c_target: Vec<f64> = pts.iter().map(|p| spec.cov(p.dist(target))).collect();
    let (alpha, lambda) = solve_with_retry(spec, &pts, &c_target)?;
    let (mean, variance) = finish(&alpha, lambda, &vals, &c_target, spec.sill())?;
    Ok((mean, variance, pts.len()))
}

/// Ordinary block kriging of the spatial mean of `field` over `area`.
///
/// The block is discretized with `spacing`; neighbours are the `nmax`
/// samples closest to the centroid of the discretization points.
pub fn predict_block(
    field: &GridFieldSnapshot,
    area: &AreaUnit,
    spec: &VariogramSpec,
    nmax: usize,
    spacing: f64,
) -> Result<BlockPrediction> {
    if field.samples.is_empty() {
        return Err(Error::EmptyInput("block prediction on empty field".into()));
    }
    if nmax == 0 {
        return Err(Error::Domain("nmax must be >= 1".into()));
    }
    let block_pts = discretize_block(area, spacing)?;
    let block_anchor = centroid(&block_pts);
    let hood = dedup_samples(&field.samples);
    let idx = knn(&hood.points, &block_anchor, nmax)?;
    let vals: Vec<f64> = idx.iter().map(|&i| hood.values[i]).collect();
    if spec.sill() <= 0.0 {
        // fully degenerate (pure-nugget with zero nugget) model: the block
        // prediction collapses to the local mean
        return Ok(BlockPrediction {
            area_id: area.id.clone(),
            mean: local_mean(&vals),
            variance: 0.0,
            n_used: vals.len(),
            family: spec.family.name(),
            nmax,
            cv_rmse: f64::NAN,
        });
    }
    let pts: Vec<Point> = idx.iter().map(|&i| hood.points[i]).collect();
    let c_target: Vec<f64> = pts
        .iter()
        .map(|p| point_to_block_cov(spec, p, &block_pts))
        .collect::<Result<_>>()?;
    let block_var = block_to_block_cov(spec, &block_pts)?;
    let (alpha, lambda) = solve_with_retry(spec, &pts, &c_target)?;
    let (mean, variance) = finish(&alpha, lambda, &vals, &c_target, block_var)?;
    Ok(BlockPrediction {
        area_id: area.id.clone(),
        mean,
        variance,
        n_used: pts.len(),
        family: spec.family.name(),
        nmax,
        cv_rmse: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variogram::Family;

    fn expo(c0: f64, c: f64, a: f64) -> VariogramSpec {
        VariogramSpec::new(Family::Exponential, c0, c, a).unwrap()
    }

    fn grid_field(n: usize, value: impl Fn(f64, f64) -> f64) -> GridFieldSnapshot {
        let mut samples = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64, j as f64);
                samples.push((Point::new(x, y), value(x, y)));
            }
        }
        GridFieldSnapshot::new("v", 2020, None, samples).unwrap()
    }

    #[test]
    fn point_to_block_is_plain_average() {
        // covariances 0.4 and 0.6 averaged to 0.5: choose distances giving
        // exactly those values under a linear check instead; here we verify
        // the averaging structure with a single-point block.
        let spec = expo(0.1, 0.9, 2.0);
        let s = Point::new(0.0, 0.0);
        let single = vec![Point::new(1.5, 0.0)];
        let got = point_to_block_cov(&spec, &s, &single).unwrap();
        assert_eq!(got, spec.cov(1.5));
        let two = vec![Point::new(1.0, 0.0), Point::new(3.0, 0.0)];
        let got = point_to_block_cov(&spec, &s, &two).unwrap();
        assert!((got - 0.5 * (spec.cov(1.0) + spec.cov(3.0))).abs() < 1e-15);
        assert!(point_to_block_cov(&spec, &s, &[]).is_err());
    }

    #[test]
    fn block_to_block_single_and_coincident_points() {
        let spec = expo(0.25, 0.75, 1.0);
        let one = vec![Point::new(2.0, 2.0)];
        assert_eq!(block_to_block_cov(&spec, &one).unwrap(), spec.sill());
        let twins = vec![Point::new(2.0, 2.0), Point::new(2.0, 2.0)];
        assert!((block_to_block_cov(&spec, &twins).unwrap() - spec.sill()).abs() < 1e-15);
    }

    #[test]
    fn block_to_block_matches_hand_enumeration() {
        let spec = expo(0.0, 1.0, 1.5);
        let square = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        let mut hand = 0.0;
        for a in &square {
            for b in &square {
                hand += spec.cov(a.dist(b));
            }
        }
        hand /= 16.0;
        assert!((block_to_block_cov(&spec, &square).unwrap() - hand).abs() < 1e-14);
    }

    #[test]
    fn pure_nugget_point_variance_matches_textbook_value() {
        // independent observations: prediction is the sample mean, with
        // variance c0 (1 + 1/n)
        let c0 = 0.64;
        let spec = VariogramSpec::new(Family::Exponential, c0, 1e-12, 1e-3).unwrap();
        let samples: Vec<(Point, f64)> = (0..8)
            .map(|k| (Point::new((k % 4) as f64 * 50.0, (k / 4) as f64 * 50.0), k as f64))
            .collect();
        // target far from every sample relative to the (tiny) range
        let (mean, var, n) = predict_point(&samples, &Point::new(25.0, 75.0), &spec, 8).unwrap();
        assert_eq!(n, 8);
        assert!((mean - 3.5).abs() < 1e-9, "pure-nugget mean is the local mean");
        assert!(
            (var - c0 * (1.0 + 1.0 / 8.0)).abs() < 1e-9,
            "variance {var} vs c0(1 + 1/n) = {}",
            c0 * (1.0 + 1.0 / 8.0)
        );
    }

    #[test]
    fn single_neighbour_solution_is_forced() {
        let spec = expo(0.2, 0.8, 1.0);
        let mut c = Matrix::zeros(1);
        c.set(0, 0, spec.sill());
        let c_target = [0.37];
        let (alpha, lambda) = solve_ordinary_kriging(&c, &c_target).unwrap();
        assert_eq!(alpha, vec![1.0]);
        assert!((lambda - (0.37 - spec.sill())).abs() < 1e-14);
    }

    #[test]
    fn symmetric_neighbours_split_evenly() {
        let spec = expo(0.1, 1.0, 2.0);
        let samples = vec![(Point::new(-1.0, 0.0), 2.0), (Point::new(1.0, 0.0), 4.0)];
        let (mean, _, n) = predict_point(&samples, &Point::new(0.0, 0.0), &spec, 2).unwrap();
        assert_eq!(n, 2);
        assert!((mean - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_block_mean_is_exact() {
        let field = grid_field(4, |_, _| 7.3);
        let area = AreaUnit::from_outer(
            "a",
            vec![
                Point::new(0.5, 0.5),
                Point::new(2.5, 0.5),
                Point::new(2.5, 2.5),
                Point::new(0.5, 2.5),
            ],
        )
        .unwrap();
        for spec in [expo(0.0, 1.0, 2.0), expo(0.5, 0.2, 0.7)] {
            let pred = predict_block(&field, &area, &spec, 9, 1.0).unwrap();
            assert_eq!(pred.mean, 7.3);
        }
    }

    #[test]
    fn single_point_block_at_sample_with_zero_nugget_is_exact() {
        let field = grid_field(3, |x, y| 1.0 + x + 2.0 * y);
        // a block so small that one discretization point lands on the sample
        // at (1, 1); spacing 10 forces the >= 4 fallback unless the polygon
        // is tiny, so use a tiny polygon and accept the halving cap
        let eps = 1e-7;
        let area = AreaUnit::from_outer(
            "tiny",
            vec![
                Point::new(1.0 - eps, 1.0 - eps),
                Point::new(1.0 + eps, 1.0 - eps),
                Point::new(1.0 + eps, 1.0 + eps),
                Point::new(1.0 - eps, 1.0 + eps),
            ],
        )
        .unwrap();
        let spec = expo(0.0, 1.0, 2.0);
        let pred = predict_block(&field, &area, &spec, 9, 2.0 * eps).unwrap();
        assert!((pred.mean - 4.0).abs() < 1e-6, "mean={}", pred.mean);
        assert!(pred.variance < 1e-6);
    }

    #[test]
    fn exact_interpolation_at_sample_point() {
        let field = grid_field(4, |x, y| (x * 0.7).sin() + y);
        let spec = expo(0.0, 1.0, 2.0);
        for (p, v) in &field.samples {
            let (mean, var, _) = predict_point(&field.samples, p, &spec, 8).unwrap();
            assert!((mean - v).abs() < 1e-9);
            assert!(var.abs() < 1e-9);
        }
    }

    #[test]
    fn shift_invariance_of_mean_and_variance() {
        let field = grid_field(4, |x, y| (x + y * 0.3).cos());
        let shifted: Vec<(Point, f64)> =
            field.samples.iter().map(|(p, v)| (*p, v + 100.0)).collect();
        let spec = expo(0.1, 0.8, 1.5);
        let target = Point::new(1.6, 2.1);
        let (m0, v0, _) = predict_point(&field.samples, &target, &spec, 6).unwrap();
        let (m1, v1, _) = predict_point(&shifted, &target, &spec, 6).unwrap();
        assert!((m1 - (m0 + 100.0)).abs() < 1e-12);
        assert_eq!(v1, v0);
    }

    #[test]
    fn weights_sum_to_one() {
        let field = grid_field(5, |x, y| x * 0.2 + (y * 1.3).sin());
        let hood = dedup_samples(&field.samples);
        let spec = expo(0.2, 1.0, 2.0);
        let idx = knn(&hood.points, &Point::new(2.2, 2.7), 12).unwrap();
        let pts: Vec<Point> = idx.iter().map(|&i| hood.points[i]).collect();
        let c_target: Vec<f64> = pts
            .iter()
            .map(|p| spec.cov(p.dist(&Point::new(2.2, 2.7))))
            .collect();
        let (alpha, _) = solve_with_retry(&spec, &pts, &c_target).unwrap();
        let s: f64 = alpha.iter().sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coincident_samples_are_averaged() {
        let samples = vec![
            (Point::new(0.0, 0.0), 2.0),
            (Point::new(0.0, 0.0), 4.0),
            (Point::new(2.0, 0.0), 5.0),
        ];
        let spec = expo(0.0, 1.0, 1.0);
        // without dedup the covariance matrix would be exactly singular
        let (mean, _, n_used) = predict_point(&samples, &Point::new(0.0, 0.0), &spec, 3).unwrap();
        assert_eq!(n_used, 2);
        assert!((mean - 3.0).abs() < 1e-9);
    }
}
