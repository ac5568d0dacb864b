//! Semivariogram families, the empirical (method-of-moments) variogram, and
//! weighted least-squares model fitting.
//!
//! Four isotropic families are supported. With nugget c0, partial sill c and
//! range a:
//!
//! - exponential: γ(h) = c0 + c·(1 − exp(−h/a))
//! - gaussian:    γ(h) = c0 + c·(1 − exp(−(h/a)²))
//! - spherical:   γ(h) = c0 + c·(1.5·(h/a) − 0.5·(h/a)³) for h ≤ a, else c0 + c
//! - matern:      closed forms for smoothness ν ∈ {0.5, 1.5, 2.5}; ν = 0.5 is
//!   identical to the exponential family
//!
//! γ(0) = 0 everywhere, and the covariance satisfies C(h) = (c0 + c) − γ(h)
//! for h > 0 with C(0) = c0 + c.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::GridFieldSnapshot;

const SQRT3: f64 = 1.732050807568877293527446341505872367_f64;
const SQRT5: f64 = 2.236067977499789696409173668731276235_f64;

/// Covariance family identifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Spherical,
    Exponential,
    Gaussian,
    /// Matérn with closed-form smoothness; `nu` must be 0.5, 1.5, or 2.5.
    Matern {
        nu: f64,
    },
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::Spherical => "spherical".into(),
            Family::Exponential => "exponential".into(),
            Family::Gaussian => "gaussian".into(),
            Family::Matern { nu } => format!("matern{:.1}", nu),
        }
    }

    /// Parses names like `spherical`, `exponential`, `gaussian`,
    /// `matern0.5` / `matern1.5` / `matern2.5` (also accepted: `matern15`).
    pub fn parse(name: &str) -> Result<Family> {
        let n = name.trim().to_ascii_lowercase();
        match n.as_str() {
            "spherical" => Ok(Family::Spherical),
            "exponential" => Ok(Family::Exponential),
            "gaussian" => Ok(Family::Gaussian),
            "matern0.5" | "matern05" => Ok(Family::Matern { nu: 0.5 }),
            "matern1.5" | "matern15" | "matern" => Ok(Family::Matern { nu: 1.5 }),
            "matern2.5" | "matern25" => Ok(Family::Matern { nu: 2.5 }),
            other => Err(Error::Domain(format!("unknown covariance family {other}"))),
        }
    }
}

/// A fitted or assumed semivariogram model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramSpec {
    pub family: Family,
    /// Nugget c0 >= 0.
    pub nugget: f64,
    /// Partial sill c >= 0.
    pub partial_sill: f64,
    /// Range a > 0.
    pub range: f64,
}

impl VariogramSpec {
    pub fn new(family: Family, nugget: f64, partial_sill: f64, range: f64) -> Result<Self> {
        if !(nugget >= 0.0) || !(partial_sill >= 0.0) || !(range > 0.0) {
            return Err(Error::Domain(format!(
                "invalid variogram parameters c0={nugget}, c={partial_sill}, a={range}"
            )));
        }
        if let Family::Matern { nu } = family {
            if ![0.5, 1.5, 2.5].contains(&nu) {
                return Err(Error::Domain(format!(
                    "matern smoothness must be one of 0.5, 1.5, 2.5 (got {nu})"
                )));
            }
        }
        Ok(VariogramSpec {
            family,
            nugget,
            partial_sill,
            range,
        })
    }

    /// Total sill c0 + c.
    pub fn sill(&self) -> f64 {
        self.nugget + self.partial_sill
    }

    /// A fit whose partial sill vanished; downstream kriging degenerates to
    /// a local mean.
    pub fn is_pure_nugget(&self) -> bool {
        self.partial_sill <= 1e-12 || self.partial_sill <= 1e-9 * self.sill()
    }

    /// γ(h) for h >= 0 (unchecked; callers pass distances).
    pub(crate) fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        let (c0, c, a) = (self.nugget, self.partial_sill, self.range);
        let structure = match self.family {
            Family::Exponential => 1.0 - (-h / a).exp(),
            Family::Gaussian => 1.0 - (-(h / a) * (h / a)).exp(),
            Family::Spherical => {
                if h <= a {
                    let r = h / a;
                    1.5 * r - 0.5 * r * r * r
                } else {
                    1.0
                }
            }
            Family::Matern { nu } => {
                if nu == 0.5 {
                    1.0 - (-h / a).exp()
                } else if nu == 1.5 {
                    let r = SQRT3 * h / a;
                    1.0 - (1.0 + r) * (-r).exp()
                } else {
                    let r = SQRT5 * h / a;
                    1.0 - (1.0 + r + r * r / 3.0) * (-r).exp()
                }
            }
        };
        c0 + c * structure
    }

    /// C(h) = (c0 + c) − γ(h) for h > 0; C(0) = c0 + c.
    pub(crate) fn cov(&self, h: f64) -> f64 {
        if h <= 0.0 {
            self.sill()
        } else {
            self.sill() - self.gamma(h)
        }
    }
}

/// Semivariance γ(h); negative lags are a domain error.
pub fn semivariance(spec: &VariogramSpec, h: f64) -> Result<f64> {
    if h < 0.0 {
        return Err(Error::Domain(format!("negative lag {h}")));
    }
    Ok(spec.gamma(h))
}

/// Point-to-point covariance C(h); negative lags are a domain error.
pub fn covariance(spec: &VariogramSpec, h: f64) -> Result<f64> {
    if h < 0.0 {
        return Err(Error::Domain(format!("negative lag {h}")));
    }
    Ok(spec.cov(h))
}

/// One lag bin of an empirical variogram.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VariogramBin {
    /// Mean pair distance within the bin.
    pub h: f64,
    /// Matheron semivariance estimate for the bin.
    pub gamma: f64,
    /// Number of point pairs in the bin.
    pub pairs: u64,
}

/// Binned method-of-moments variogram estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    pub bins: Vec<VariogramBin>,
}

/// Estimates the empirical semivariogram with the Matheron estimator:
/// γ̂(h_j) = (1 / 2N_j) Σ (z_i − z_k)² over pairs binned by distance into
/// `n_lags` equal-width lags up to `cutoff`. Empty bins are dropped.
pub fn empirical_variogram(
    field: &GridFieldSnapshot,
    n_lags: usize,
    cutoff: f64,
) -> Result<EmpiricalVariogram> {
    if field.samples.len() < 2 {
        return Err(Error::InsufficientData(
            "empirical variogram needs at least 2 samples".into(),
        ));
    }
    if n_lags == 0 || !(cutoff > 0.0) {
        return Err(Error::Domain(format!(
            "invalid variogram binning: n_lags={n_lags}, cutoff={cutoff}"
        )));
    }
    let width = cutoff / n_lags as f64;
    let mut sum_d = vec![0.0; n_lags];
    let mut sum_sq = vec![0.0; n_lags];
    let mut count = vec![0u64; n_lags];
    let samples = &field.samples;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d = samples[i].0.dist(&samples[j].0);
            if d > cutoff {
                continue;
            }
            let mut bin = (d / width) as usize;
            if bin >= n_lags {
                bin = n_lags - 1;
            }
            let diff = samples[i].1 - samples[j].1;
            sum_d[bin] += d;
            sum_sq[bin] += diff * diff;
            count[bin] += 1;
        }
    }
    let bins: Vec<VariogramBin> = (0..n_lags)
        .filter(|&b| count[b] > 0)
        .map(|b| VariogramBin {
            h: sum_d[b] / count[b] as f64,
            gamma: sum_sq[b] / (2.0 * count[b] as f64),
            pairs: count[b],
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::EmptyVariogram);
    }
    Ok(EmpiricalVariogram { bins })
}

/// Weighted least-squares fit of a variogram family to an empirical
/// variogram, minimizing Σ w_j (γ̂_j − γ(h_j))² with weights w_j = N_j / h_j².
///
/// Parameters are constrained to c0 ≥ 0, c ≥ 0, a > 0, starting from
/// (0, data_variance, max_distance / 3) with a deterministic bounded
/// Nelder-Mead search. The returned model never scores worse than the
/// starting point.
pub fn fit_variogram(
    emp: &EmpiricalVariogram,
    family: Family,
    data_variance: f64,
    max_distance: f64,
) -> Result<VariogramSpec> {
    if emp.bins.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "variogram fit needs >= 3 bins, got {}",
            emp.bins.len()
        )));
    }
    if !(max_distance > 0.0) {
        return Err(Error::Domain("max_distance must be positive".into()));
    }
    let a_floor = 1e-9 * max_distance;
    let scale_c = data_variance.max(1e-12);
    let objective = |p: &[f64]| -> f64 {
        let spec = VariogramSpec {
            family,
            nugget: p[0].max(0.0),
            partial_sill: p[1].max(0.0),
            range: p[2].max(a_floor),
        };
        emp.bins
            .iter()
            .map(|b| {
                let w = b.pairs as f64 / (b.h * b.h);
                let r = b.gamma - spec.gamma(b.h);
                w * r * r
            })
            .sum()
    };
    let start = [0.0, data_variance.max(0.0), max_distance / 3.0];
    if !objective(&start).is_finite() {
        return Err(Error::FitFailure("non-finite objective at start".into()));
    }
    let steps = [0.25 * scale_c, 0.5 * scale_c, 0.25 * max_distance];
    let best = nelder_mead(objective, &start, &steps, 500);
    if !best.1.is_finite() {
        return Err(Error::FitFailure(
            "optimizer reached non-finite objective".into(),
        ));
    }
    VariogramSpec::new(
        family,
        best.0[0].max(0.0),
        best.0[1].max(0.0),
        best.0[2].max(a_floor),
    )
}

/// Deterministic Nelder-Mead with a fixed iteration budget. Returns the best
/// vertex ever seen (which includes the starting point).
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    steps: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..dim {
        let mut v = start.to_vec();
        v[i] += steps[i].abs().max(1e-12);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let clean = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    for s in &mut simplex {
        s.1 = clean(s.1);
    }
    let (mut best_x, mut best_f) = simplex[0].clone();
    for s in &simplex {
        if s.1 < best_f {
            best_x = s.0.clone();
            best_f = s.1;
        }
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        let spread = simplex[dim].1 - simplex[0].1;
        if spread.abs() <= 1e-14 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        // centroid of all but the worst vertex
        let mut cen = vec![0.0; dim];
        for s in &simplex[..dim] {
            for (c, v) in cen.iter_mut().zip(&s.0) {
                *c += v / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let reflect: Vec<f64> = cen
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = clean(f(&reflect));
        if fr < simplex[0].1 {
            let expand: Vec<f64> = cen
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + gamma * (r - c))
                .collect();
            let fe = clean(f(&expand));
            simplex[dim] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflect, fr);
        } else {
            let contract: Vec<f64> = cen
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + rho * (w - c))
                .collect();
            let fc = clean(f(&contract));
            if fc < worst.1 {
                simplex[dim] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let base = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for (v, b) in s.0.iter_mut().zip(&base) {
                        *v = b + sigma * (*v - *b);
                    }
                    s.1 = clean(f(&s.0));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if simplex[0].1 < best_f {
        best_x = simplex[0].0.clone();
        best_f = simplex[0].1;
    }
    (best_x, best_f)
}
