//! `gvf`: fits the candidate variance models per variable, applies the
//! selection rule, and writes the released variance table carrying direct,
//! model, and blended values side by side.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;

use arealize::gvf::{evaluate_candidates, GvfDomain, GvfSelection};
use arealize::table::{self, fmt_f64, Table};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub const VARIANCES_HEADER: [&str; 10] = [
    "area_id",
    "year",
    "variable",
    "var_total_direct",
    "var_total_gvf",
    "var_total_final",
    "var_mean_final",
    "blend_weight",
    "n",
    "degenerate",
];

pub fn run(cfg: &RunConfig, estimates_path: &Path) -> Result<()> {
    let t = Table::read(estimates_path)?;
    let (carea, cyear, cvar, ctotal, cvtot, cn, cpop) = (
        t.col("area_id")?,
        t.col("year")?,
        t.col("variable")?,
        t.col("total")?,
        t.col("var_total")?,
        t.col("n")?,
        t.col("population")?,
    );
    let mut domains: BTreeMap<String, Vec<GvfDomain>> = BTreeMap::new();
    let mut pops: BTreeMap<(String, String, i32), f64> = BTreeMap::new();
    for row in &t.rows {
        let variable = row[cvar].clone();
        let domain = GvfDomain {
            area: row[carea].clone(),
            year: t.i32(row, cyear)?,
            estimate: t.f64(row, ctotal)?,
            var_direct: t.f64(row, cvtot)?,
            n: t.f64(row, cn)? as u32,
            pop: t.f64(row, cpop)?,
        };
        pops.insert(
            (variable.clone(), domain.area.clone(), domain.year),
            domain.pop,
        );
        domains.entry(variable).or_default().push(domain);
    }

    let mut rows = Vec::new();
    let mut models: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut unavailable: Vec<String> = Vec::new();
    for (variable, list) in &domains {
        match evaluate_candidates(list, cfg.tolerances.gvf_tau) {
            Ok(selection) => {
                push_rows(&mut rows, variable, &selection, &pops);
                models.insert(variable.clone(), describe(&selection));
            }
            Err(e) => {
                // keep direct variances where defined; the released table
                // then simply repeats them
                eprintln!("warning: variance model unavailable for {variable}: {e}");
                unavailable.push(variable.clone());
                for d in list {
                    rows.push(vec![
                        d.area.clone(),
                        d.year.to_string(),
                        variable.clone(),
                        fmt_f64(d.var_direct),
                        String::new(),
                        fmt_f64(d.var_direct),
                        fmt_f64(d.var_direct / (d.pop * d.pop)),
                        "0".to_string(),
                        d.n.to_string(),
                        "0".to_string(),
                    ]);
                }
            }
        }
    }
    rows.sort();
    let out = &cfg.out_dir;
    table::write(&out.join("variances.csv"), &VARIANCES_HEADER, &rows)?;
    let mut model_doc = serde_json::to_string_pretty(&models)?;
    model_doc.push('\n');
    std::fs::write(out.join("gvf_models.json"), model_doc)?;
    let mut manifest = Manifest::new("gvf", cfg);
    manifest.push(
        "variables_without_model",
        serde_json::json!(unavailable),
        "engine",
    );
    manifest.write(out)?;
    Ok(())
}

fn push_rows(
    rows: &mut Vec<Vec<String>>,
    variable: &str,
    selection: &GvfSelection,
    pops: &BTreeMap<(String, String, i32), f64>,
) {
    for t in &selection.triples {
        let pop = pops[&(variable.to_string(), t.area.clone(), t.year)];
        rows.push(vec![
            t.area.clone(),
            t.year.to_string(),
            variable.to_string(),
            fmt_f64(t.var_direct),
            fmt_f64(t.var_gvf),
            fmt_f64(t.var_final),
            fmt_f64(t.var_final / (pop * pop)),
            fmt_f64(t.blend_weight),
            t.n.to_string(),
            (t.degenerate as u8).to_string(),
        ]);
    }
}

fn describe(selection: &GvfSelection) -> serde_json::Value {
    let m = &selection.model;
    serde_json::json!({
        "response": m.response.name(),
        "precision": m.precision.name(),
        "alpha": m.alpha,
        "beta": m.beta,
        "gamma1": m.gamma1,
        "gamma2": m.gamma2,
        "area_effects": m.area_effects,
        "year_effects": m.year_effects.iter().map(|(y, e)| (y.to_string(), e)).collect::<BTreeMap<_, _>>(),
        "metrics": m.fit_metrics.map(|f| serde_json::json!({
            "rmse_log": f.rmse_log,
            "reduction_upper": f.reduction_upper,
            "increase_share": f.increase_share,
            "excluded": f.excluded,
        })),
        "candidates": selection.candidates.iter().map(|(r, p, f)| serde_json::json!({
            "response": r.name(),
            "precision": p.name(),
            "rmse_log": f.rmse_log,
            "reduction_upper": f.reduction_upper,
            "increase_share": f.increase_share,
        })).collect::<Vec<_>>(),
    })
}
