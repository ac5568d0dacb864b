//! Declarative run configuration: one JSON document holds every seed,
//! tolerance, and hyperparameter of a run, so the emitted manifest plus the
//! config file fully reproduce any output.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use arealize::temporal::{UnitRule, WindDirectionConvention, MAGNUS_A, MAGNUS_B};
use arealize::tuning::TuningConfig;
use arealize::variogram::Family;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed; every random stream derives from it.
    pub seed: u64,
    /// Rayon worker threads; 0 keeps the library default. Outputs do not
    /// depend on the degree of parallelism.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub tuning: TuningSection,
    pub tolerances: ToleranceSection,
    pub temporal: TemporalSection,
    pub panel: PanelSection,
    pub validate: ValidateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            out_dir: PathBuf::from("out"),
            tuning: TuningSection::default(),
            tolerances: ToleranceSection::default(),
            temporal: TemporalSection::default(),
            panel: PanelSection::default(),
            validate: ValidateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub families: Vec<String>,
    pub nmax_grid: Vec<usize>,
    pub folds: usize,
    pub repeats: usize,
    pub initial_nmax: usize,
    /// Block discretization spacing in coordinate units.
    pub spacing: f64,
    pub n_lags: usize,
    pub cutoff_fraction: f64,
    pub fit_per_fold: bool,
}

impl Default for TuningSection {
    fn default() -> Self {
        TuningSection {
            families: vec![
                "spherical".into(),
                "exponential".into(),
                "gaussian".into(),
                "matern1.5".into(),
            ],
            nmax_grid: vec![8, 16, 32, 64],
            folds: 5,
            repeats: 1,
            initial_nmax: 16,
            spacing: 0.5,
            n_lags: 15,
            cutoff_fraction: 1.0 / 3.0,
            fit_per_fold: true,
        }
    }
}

impl TuningSection {
    pub fn to_tuning_config(&self, seed: u64) -> Result<TuningConfig> {
        let families = self
            .families
            .iter()
            .map(|name| Family::parse(name).map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()?;
        Ok(TuningConfig {
            families,
            nmax_grid: self.nmax_grid.clone(),
            folds: self.folds,
            repeats: self.repeats,
            seed,
            initial_nmax: self.initial_nmax,
            spacing: self.spacing,
            n_lags: self.n_lags,
            cutoff_fraction: self.cutoff_fraction,
            fit_per_fold: self.fit_per_fold,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub rake_tol: f64,
    pub rake_max_iter: usize,
    /// RMSE tolerance band of the variance-model selection.
    pub gvf_tau: f64,
    pub share_tol: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            rake_tol: 1e-8,
            rake_max_iter: 1000,
            gvf_tau: 0.05,
            share_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalSection {
    /// `mirrored` evaluates wd = 180 - atan2(u/ws, v/ws) deg; `meteorological`
    /// uses the 180 + atan2 form.
    pub wd_convention: String,
    pub magnus_a: f64,
    pub magnus_b: f64,
    /// variable -> unit conversion applied before aggregation.
    pub unit_rules: Vec<(String, String)>,
}

impl Default for TemporalSection {
    fn default() -> Self {
        TemporalSection {
            wd_convention: "mirrored".into(),
            magnus_a: MAGNUS_A,
            magnus_b: MAGNUS_B,
            unit_rules: vec![
                ("t2m".into(), "k_to_c".into()),
                ("d2m".into(), "k_to_c".into()),
                ("tp".into(), "m_to_mm".into()),
                ("sf".into(), "m_to_mm".into()),
                ("ro".into(), "m_to_mm".into()),
            ],
        }
    }
}

impl TemporalSection {
    pub fn convention(&self) -> Result<WindDirectionConvention> {
        match self.wd_convention.as_str() {
            "mirrored" => Ok(WindDirectionConvention::Mirrored),
            "meteorological" => Ok(WindDirectionConvention::Meteorological),
            other => anyhow::bail!("unknown wind direction convention {other}"),
        }
    }

    pub fn unit_rule(&self, variable: &str) -> Result<UnitRule> {
        for (var, rule) in &self.unit_rules {
            if var == variable {
                return match rule.as_str() {
                    "k_to_c" => Ok(UnitRule::KToC),
                    "m_to_mm" => Ok(UnitRule::MToMm),
                    "identity" => Ok(UnitRule::Identity),
                    other => anyhow::bail!("unknown unit rule {other} for {var}"),
                };
            }
        }
        Ok(UnitRule::Identity)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSection {
    pub year_min: i32,
    pub year_max: i32,
}

impl Default for PanelSection {
    fn default() -> Self {
        PanelSection {
            year_min: 2011,
            year_max: 2024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub fidelity_threshold: f64,
    pub strict: bool,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            fidelity_threshold: 0.9,
            strict: false,
        }
    }
}

impl RunConfig {
    /// Loads the config file (or defaults when absent), then applies the
    /// output-directory environment override and command-line overrides.
    pub fn load(
        path: Option<&Path>,
        seed_override: Option<u64>,
        out_override: Option<&Path>,
    ) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Ok(dir) = std::env::var("AREALIZE_OUT") {
            if !dir.is_empty() {
                cfg.out_dir = PathBuf::from(dir);
            }
        }
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        if let Some(out) = out_override {
            cfg.out_dir = out.to_path_buf();
        }
        anyhow::ensure!(cfg.tolerances.rake_tol > 0.0, "rake_tol must be positive");
        anyhow::ensure!(cfg.tolerances.gvf_tau > 0.0, "gvf_tau must be positive");
        anyhow::ensure!(cfg.tolerances.share_tol > 0.0, "share_tol must be positive");
        Ok(cfg)
    }
}
