//! Generalized variance functions: log-scale models relating direct design
//! variances to domain precision quantities, candidate selection, and the
//! sample-size blending that yields the released variances.
//!
//! Two response formulations are fitted, the log variance
//! log(V) = α + β·log(Y) + g(p) + u + v + ε
//! and the log squared coefficient of variation
//! log(CV²) = α + g(p) + u + v + ε with CV² = V / Y²,
//! each combined with three precision terms g(p): γ₁·log(n),
//! γ₁·log(n/N), or γ₁·log(n) + γ₂·log(N). Area and year intercepts are
//! estimated as sum-to-zero group effects. Predictions are exponentiated
//! without bias correction, and the final variance blends the model
//! prediction with the direct estimate by domain sample size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Response formulation of a candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Variance,
    RelVariance,
}

/// Precision term g(p) of a candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionSpec {
    LogN,
    LogSamplingFraction,
    LogNPlusLogPop,
}

impl Response {
    pub const ALL: [Response; 2] = [Response::Variance, Response::RelVariance];

    pub fn name(self) -> &'static str {
        match self {
            Response::Variance => "variance",
            Response::RelVariance => "relvariance",
        }
    }
}

impl PrecisionSpec {
    pub const ALL: [PrecisionSpec; 3] = [
        PrecisionSpec::LogN,
        PrecisionSpec::LogSamplingFraction,
        PrecisionSpec::LogNPlusLogPop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecisionSpec::LogN => "log_n",
            PrecisionSpec::LogSamplingFraction => "log_n_over_N",
            PrecisionSpec::LogNPlusLogPop => "log_n_plus_log_N",
        }
    }
}

/// One domain observation feeding the variance model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GvfDomain {
    pub area: String,
    pub year: i32,
    /// Point estimate Y of the domain.
    pub estimate: f64,
    /// Direct design variance V.
    pub var_direct: f64,
    /// Domain sample size n.
    pub n: u32,
    /// Domain population size N.
    pub pop: f64,
}

/// Selection metrics of one candidate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    /// Root mean squared log difference between direct and model variances.
    pub rmse_log: f64,
    /// Median final/direct ratio over the upper variance quartile.
    pub reduction_upper: f64,
    /// Share of domains whose final variance exceeds the direct one by more
    /// than 5 percent.
    pub increase_share: f64,
    /// Domains dropped from the log comparison for non-positive variances.
    pub excluded: usize,
}

/// A fitted variance model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GvfModel {
    pub response: Response,
    pub precision: PrecisionSpec,
    pub alpha: f64,
    /// Elasticity of the variance in the point estimate (variance response
    /// only).
    pub beta: Option<f64>,
    pub gamma1: f64,
    pub gamma2: Option<f64>,
    /// Sum-to-zero area intercepts.
    pub area_effects: BTreeMap<String, f64>,
    /// Sum-to-zero year intercepts.
    pub year_effects: BTreeMap<i32, f64>,
    /// Filled after candidate evaluation.
    pub fit_metrics: Option<Metrics>,
}

/// Minimum domain sample size for the estimation sample.
pub const ESTIMATION_MIN_N: u32 = 3;
/// Minimum number of estimation domains.
pub const ESTIMATION_MIN_DOMAINS: usize = 10;
/// Default width of the RMSE tolerance band in model selection.
pub const DEFAULT_TAU: f64 = 0.05;

fn estimation_filter(d: &GvfDomain, response: Response) -> bool {
    if d.n < ESTIMATION_MIN_N || !(d.var_direct > 0.0) {
        return false;
    }
    match response {
        Response::Variance => d.estimate > 0.0,
        Response::RelVariance => d.estimate != 0.0,
    }
}

/// Fits one candidate model by least squares on the estimation sample
/// (domains with n >= 3, positive direct variance, and a usable point
/// estimate). Group intercepts are estimated jointly under a sum-to-zero
/// constraint; groups unseen here predict with a zero effect.
pub fn fit_gvf(
    domains: &[GvfDomain],
    response: Response,
    precision: PrecisionSpec,
) -> Result<GvfModel> {
    let sample: Vec<&GvfDomain> = domains
        .iter()
        .filter(|d| estimation_filter(d, response))
        .collect();
    if sample.len() < ESTIMATION_MIN_DOMAINS {
        return Err(Error::GvfUnavailable(format!(
            "{} estimation domains, need {}",
            sample.len(),
            ESTIMATION_MIN_DOMAINS
        )));
    }
    let mut areas: Vec<String> = sample.iter().map(|d| d.area.clone()).collect();
    areas.sort();
    areas.dedup();
    let mut years: Vec<i32> = sample.iter().map(|d| d.year).collect();
    years.sort_unstable();
    years.dedup();

    let n_beta = usize::from(response == Response::Variance);
    let n_gamma = match precision {
        PrecisionSpec::LogNPlusLogPop => 2,
        _ => 1,
    };
    let p = 1 + n_beta + n_gamma + (areas.len() - 1) + (years.len() - 1);

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(sample.len());
    let mut ys: Vec<f64> = Vec::with_capacity(sample.len());
    for d in &sample {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        if response == Response::Variance {
            row.push(d.estimate.ln());
        }
        match precision {
            PrecisionSpec::LogN => row.push(f64::from(d.n).ln()),
            PrecisionSpec::LogSamplingFraction => row.push((f64::from(d.n) / d.pop).ln()),
            PrecisionSpec::LogNPlusLogPop => {
                row.push(f64::from(d.n).ln());
                row.push(d.pop.ln());
            }
        }
        push_effect_columns(&mut row, &areas, &d.area);
        push_effect_columns(&mut row, &years, &d.year);
        debug_assert_eq!(row.len(), p);
        rows.push(row);
        ys.push(match response {
            Response::Variance => d.var_direct.ln(),
            Response::RelVariance => (d.var_direct / (d.estimate * d.estimate)).ln(),
        });
    }

    // normal equations
    let mut xtx = Matrix::zeros(p);
    let mut xty = vec![0.0; p];
    for (row, y) in rows.iter().zip(&ys) {
        for i in 0..p {
            xty[i] += row[i] * y;
            for j in 0..p {
                let v = xtx.get(i, j) + row[i] * row[j];
                xtx.set(i, j, v);
            }
        }
    }
    let coef = linalg::solve(xtx, xty)
        .map_err(|e| Error::GvfUnavailable(format!("collinear design: {e}")))?;

    let mut k = 0;
    let alpha = coef[k];
    k += 1;
    let beta = if response == Response::Variance {
        k += 1;
        Some(coef[k - 1])
    } else {
        None
    };
    let gamma1 = coef[k];
    k += 1;
    let gamma2 = if n_gamma == 2 {
        k += 1;
        Some(coef[k - 1])
    } else {
        None
    };
    let area_effects = unpack_effects(&areas, &coef[k..k + areas.len() - 1]);
    k += areas.len() - 1;
    let year_effects = unpack_effects(&years, &coef[k..k + years.len() - 1]);

    Ok(GvfModel {
        response,
        precision,
        alpha,
        beta,
        gamma1,
        gamma2,
        area_effects,
        year_effects,
        fit_metrics: None,
    })
}

/// Effects (deviation) coding: K − 1 columns; the last group scores −1 in
/// every column, which builds the sum-to-zero constraint into the design.
fn push_effect_columns<T: PartialEq>(row: &mut Vec<f64>, groups: &[T], member: &T) {
    let k = groups.len();
    if k <= 1 {
        return;
    }
    let idx = groups
        .iter()
        .position(|g| g == member)
        .expect("member in groups");
    for j in 0..k - 1 {
        row.push(if idx == j {
            1.0
        } else if idx == k - 1 {
            -1.0
        } else {
            0.0
        });
    }
}

fn unpack_effects<T: Clone + Ord>(groups: &[T], coefs: &[f64]) -> BTreeMap<T, f64> {
    let mut out = BTreeMap::new();
    if groups.len() <= 1 {
        for g in groups {
            out.insert(g.clone(), 0.0);
        }
        return out;
    }
    let mut sum = 0.0;
    for (g, c) in groups.iter().zip(coefs) {
        out.insert(g.clone(), *c);
        sum += c;
    }
    out.insert(groups[groups.len() - 1].clone(), -sum);
    out
}

/// A model-predicted variance; degenerate when the point estimate makes the
/// model formally zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarPrediction {
    pub var_gvf: f64,
    pub degenerate: bool,
}

/// Predicts the model variance of a domain. The linear predictor is
/// exponentiated without bias correction; a relvariance prediction is scaled
/// by Y². Domains whose point estimate leaves log Y (or the CV² scaling)
/// undefined receive a flagged zero.
pub fn predict_variance(model: &GvfModel, domain: &GvfDomain) -> VarPrediction {
    let n = domain.n.max(1);
    let g = match model.precision {
        PrecisionSpec::LogN => model.gamma1 * f64::from(n).ln(),
        PrecisionSpec::LogSamplingFraction => model.gamma1 * (f64::from(n) / domain.pop).ln(),
        PrecisionSpec::LogNPlusLogPop => {
            model.gamma1 * f64::from(n).ln() + model.gamma2.unwrap_or(0.0) * domain.pop.ln()
        }
    };
    let u = model.area_effects.get(&domain.area).copied().unwrap_or(0.0);
    let v = model.year_effects.get(&domain.year).copied().unwrap_or(0.0);
    match model.response {
        Response::Variance => {
            if domain.estimate <= 0.0 {
                return VarPrediction {
                    var_gvf: 0.0,
                    degenerate: true,
                };
            }
            let lp = model.alpha + model.beta.unwrap_or(0.0) * domain.estimate.ln() + g + u + v;
            VarPrediction {
                var_gvf: lp.exp(),
                degenerate: false,
            }
        }
        Response::RelVariance => {
            if domain.estimate == 0.0 {
                return VarPrediction {
                    var_gvf: 0.0,
                    degenerate: true,
                };
            }
            let lp = model.alpha + g + u + v;
            VarPrediction {
                var_gvf: lp.exp() * domain.estimate * domain.estimate,
                degenerate: false,
            }
        }
    }
}

/// Blending weight w(n): model-only below two observations, an even split at
/// two, direct variance from three observations on.
pub fn blend_weight(n: u32) -> f64 {
    match n {
        0 | 1 => 1.0,
        2 => 0.5,
        _ => 0.0,
    }
}

/// Final released variance: w(n)·V_model + (1 − w(n))·V_direct.
pub fn blend(var_direct: f64, var_gvf: f64, n: u32) -> f64 {
    let w = blend_weight(n);
    w * var_gvf + (1.0 - w) * var_direct
}

/// Inclusive linear-interpolation quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Computes the three selection criteria from aligned per-domain variance
/// lists. Domains with non-positive direct or model variances are excluded
/// from the log comparison and counted.
pub fn selection_metrics(direct: &[f64], gvf: &[f64], blended: &[f64]) -> Metrics {
    assert!(
        direct.len() == gvf.len() && direct.len() == blended.len(),
        "metric lists must be aligned"
    );
    let mut sq = 0.0;
    let mut n_log = 0usize;
    let mut excluded = 0usize;
    for (&d, &g) in direct.iter().zip(gvf) {
        if d > 0.0 && g > 0.0 {
            sq += (d.ln() - g.ln()).powi(2);
            n_log += 1;
        } else {
            excluded += 1;
        }
    }
    let rmse_log = if n_log > 0 {
        (sq / n_log as f64).sqrt()
    } else {
        f64::INFINITY
    };

    let mut positive: Vec<f64> = direct.iter().copied().filter(|&d| d > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    let (reduction_upper, increase_share) = if positive.is_empty() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let q75 = quantile_sorted(&positive, 0.75);
        let mut ratios: Vec<f64> = direct
            .iter()
            .zip(blended)
            .filter(|(&d, _)| d > 0.0 && d >= q75)
            .map(|(&d, &b)| b / d)
            .collect();
        ratios.sort_by(f64::total_cmp);
        let reduction = quantile_sorted(&ratios, 0.5);
        let m = positive.len() as f64;
        let increases = direct
            .iter()
            .zip(blended)
            .filter(|(&d, &b)| d > 0.0 && b / d > 1.05)
            .count() as f64;
        (reduction, increases / m)
    };
    Metrics {
        rmse_log,
        reduction_upper,
        increase_share,
        excluded,
    }
}

/// Hierarchical candidate selection: keep models within the RMSE tolerance
/// band rmse <= min_rmse·(1 + tau), then minimize the upper-tail reduction,
/// then the increase share, then the RMSE itself; remaining ties go to the
/// earlier candidate. Returns the winning index.
pub fn select_model(candidates: &[Metrics], tau: f64) -> Result<usize> {
    let finite: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].rmse_log.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::GvfUnavailable(
            "no candidate with finite selection metrics".into(),
        ));
    }
    let min_rmse = finite
        .iter()
        .map(|&i| candidates[i].rmse_log)
        .fold(f64::INFINITY, f64::min);
    let band: Vec<usize> = finite
        .into_iter()
        .filter(|&i| candidates[i].rmse_log <= min_rmse * (1.0 + tau))
        .collect();
    let mut best = band[0];
    for &i in &band[1..] {
        let (a, b) = (&candidates[i], &candidates[best]);
        let key_a = (a.reduction_upper, a.increase_share, a.rmse_log);
        let key_b = (b.reduction_upper, b.increase_share, b.rmse_log);
        if key_a
            .0
            .total_cmp(&key_b.0)
            .then(key_a.1.total_cmp(&key_b.1))
            .then(key_a.2.total_cmp(&key_b.2))
            == std::cmp::Ordering::Less
        {
            best = i;
        }
    }
    Ok(best)
}

/// Released variance triple of one domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceTriple {
    pub area: String,
    pub year: i32,
    pub var_direct: f64,
    pub var_gvf: f64,
    pub var_final: f64,
    pub blend_weight: f64,
    pub n: u32,
    pub degenerate: bool,
}

/// Outcome of the candidate sweep for one variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GvfSelection {
    pub model: GvfModel,
    /// (response, precision, metrics) of every fitted candidate, in
    /// evaluation order; failed fits are absent.
    pub candidates: Vec<(Response, PrecisionSpec, Metrics)>,
    pub triples: Vec<VarianceTriple>,
}

/// Fits all six candidate models, scores them on blended variances, applies
/// the selection rule, and returns the winner with the released variance
/// table.
pub fn evaluate_candidates(domains: &[GvfDomain], tau: f64) -> Result<GvfSelection> {
    let mut fitted: Vec<GvfModel> = Vec::new();
    let mut table: Vec<(Response, PrecisionSpec, Metrics)> = Vec::new();
    for response in Response::ALL {
        for precision in PrecisionSpec::ALL {
            let Ok(model) = fit_gvf(domains, response, precision) else {
                continue;
            };
            let (direct, gvf, blended) = predict_all(&model, domains);
            let metrics = selection_metrics(&direct, &gvf, &blended);
            table.push((response, precision, metrics));
            fitted.push(model);
        }
    }
    if fitted.is_empty() {
        return Err(Error::GvfUnavailable("every candidate fit failed".into()));
    }
    let metrics: Vec<Metrics> = table.iter().map(|(_, _, m)| *m).collect();
    let winner = select_model(&metrics, tau)?;
    let mut model = fitted.swap_remove(winner);
    model.fit_metrics = Some(metrics[winner]);

    let triples = domains
        .iter()
        .map(|d| {
            let pred = predict_variance(&model, d);
            let var_final = blend(d.var_direct, pred.var_gvf, d.n);
            VarianceTriple {
                area: d.area.clone(),
                year: d.year,
                var_direct: d.var_direct,
                var_gvf: pred.var_gvf,
                var_final,
                blend_weight: blend_weight(d.n),
                n: d.n,
                degenerate: pred.degenerate,
            }
        })
        .collect();
    Ok(GvfSelection {
        model,
        candidates: table,
        triples,
    })
}

fn predict_all(model: &GvfModel, domains: &[GvfDomain]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut direct = Vec::with_capacity(domains.len());
    let mut gvf = Vec::with_capacity(domains.len());
    let mut blended = Vec::with_capacity(domains.len());
    for d in domains {
        let pred = predict_variance(model, d);
        direct.push(d.var_direct);
        gvf.push(pred.var_gvf);
        blended.push(blend(d.var_direct, pred.var_gvf, d.n));
    }
    (direct, gvf, blended)
}
