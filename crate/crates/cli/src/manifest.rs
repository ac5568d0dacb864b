//! Run manifest: one JSON document per run recording every seed, tolerance,
//! constant, and tuned hyperparameter, with the origin of each value
//! (`methodology` for pinned methodological constants, `engine` for
//! implementation defaults). Identical configs and inputs produce identical
//! manifests byte for byte.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub value: serde_json::Value,
    pub origin: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub coordinate_unit: &'static str,
    pub parameters: Vec<ManifestEntry>,
    /// Per-field tuning outcomes, filled by the alignment commands.
    pub selections: Vec<serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Manifest {
        let mut m = Manifest {
            command: command.to_string(),
            seed: cfg.seed,
            coordinate_unit: "input-native (no coordinate transformation applied)",
            parameters: Vec::new(),
            selections: Vec::new(),
        };
        m.push("families", json!(cfg.tuning.families), "methodology");
        m.push("nmax_grid", json!(cfg.tuning.nmax_grid), "engine");
        m.push("cv_folds", json!(cfg.tuning.folds), "methodology");
        m.push("cv_repeats", json!(cfg.tuning.repeats), "engine");
        m.push("initial_nmax", json!(cfg.tuning.initial_nmax), "engine");
        m.push("block_spacing", json!(cfg.tuning.spacing), "engine");
        m.push("variogram_n_lags", json!(cfg.tuning.n_lags), "engine");
        m.push(
            "variogram_cutoff_fraction",
            json!(cfg.tuning.cutoff_fraction),
            "engine",
        );
        m.push(
            "variogram_fit_per_fold",
            json!(cfg.tuning.fit_per_fold),
            "engine",
        );
        m.push("variogram_wls_weights", json!("pairs / h^2"), "engine");
        m.push("rake_tol", json!(cfg.tolerances.rake_tol), "engine");
        m.push(
            "rake_max_iter",
            json!(cfg.tolerances.rake_max_iter),
            "engine",
        );
        m.push("rake_initial_weights", json!(1.0), "engine");
        m.push("gvf_tau", json!(cfg.tolerances.gvf_tau), "methodology");
        m.push(
            "gvf_blend_weights",
            json!({"n<=1": 1.0, "n=2": 0.5, "n>=3": 0.0}),
            "methodology",
        );
        m.push("gvf_estimation_min_n", json!(3), "methodology");
        m.push(
            "quantile_rule",
            json!("inclusive linear interpolation"),
            "engine",
        );
        m.push("share_tol", json!(cfg.tolerances.share_tol), "engine");
        m.push(
            "wd_convention",
            json!(cfg.temporal.wd_convention),
            "methodology",
        );
        m.push(
            "magnus_constants_c",
            json!([cfg.temporal.magnus_a, cfg.temporal.magnus_b]),
            "methodology",
        );
        m.push(
            "season_rule",
            json!("december_in_same_calendar_year"),
            "engine",
        );
        m.push("sd_denominator", json!("n-1"), "engine");
        m.push(
            "standard_output_floor_eur",
            json!(arealize::survey::STANDARD_OUTPUT_FLOOR_EUR),
            "methodology",
        );
        m.push(
            "size_class_split_eur",
            json!(arealize::survey::SIZE_CLASS_SPLIT_EUR),
            "methodology",
        );
        m.push(
            "donor_quality_order",
            json!(["cell", "rake2d", "rake1d", "uniform"]),
            "engine",
        );
        m.push(
            "elevation_band_thresholds_m",
            json!([200.0, 600.0]),
            "methodology",
        );
        m.push(
            "panel_years",
            json!([cfg.panel.year_min, cfg.panel.year_max]),
            "engine",
        );
        m.push(
            "fidelity_threshold",
            json!(cfg.validate.fidelity_threshold),
            "engine",
        );
        m
    }

    pub fn push(&mut self, name: &str, value: serde_json::Value, origin: &'static str) {
        self.parameters.push(ManifestEntry {
            name: name.to_string(),
            value,
            origin,
        });
    }

    pub fn push_selection(&mut self, selection: serde_json::Value) {
        self.selections.push(selection);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("manifest_{}.json", self.command.replace('-', "_")));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
