//! Command-line entry point: deterministic orchestration of the
//! synthetic-to-panel pipeline. Data goes to files, logs to standard error.
//!
//! Exit codes: 0 success, 2 usage, 3 malformed configuration, 4 missing
//! input, 5 validation failure under --strict, 1 any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod io;
mod manifest;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "arealize",
    about = "Harmonizes gridded, municipal, raster, and survey data onto an annual areal panel",
    version
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory (also: AREALIZE_OUT).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aligns gridded field snapshots onto areal units with tuned local
    /// block kriging.
    Krige {
        /// Field table: variable,year,sector,x,y,value.
        #[arg(long)]
        field: PathBuf,
        /// Areal units as a GeoJSON FeatureCollection with an `id` property.
        #[arg(long)]
        areas: PathBuf,
    },
    /// Converts units, derives ws/wd/rh, and computes annual and seasonal
    /// summaries per grid cell.
    AggregateTemporal {
        /// Series table: cell_id,x,y,timestamp,variable,value.
        #[arg(long)]
        series: PathBuf,
    },
    /// Crosswalk aggregation, land-cover shares, and elevation bands.
    AggregateAreal {
        #[arg(long)]
        areas: PathBuf,
        #[arg(long)]
        crosswalk: Option<PathBuf>,
        /// Municipal table: municipality_id,year,variable,value,method.
        #[arg(long)]
        municipal: Option<PathBuf>,
        /// Land-cover raster: snapshot_year,x,y,class.
        #[arg(long)]
        landcover: Option<PathBuf>,
        /// Reclassification table: original,harmonized.
        #[arg(long)]
        reclass: Option<PathBuf>,
        /// Snapshot schedule: snapshot_year,from_year,to_year.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Area of one raster cell in squared coordinate units.
        #[arg(long)]
        cell_area: Option<f64>,
        /// Elevation sample: x,y,elevation.
        #[arg(long)]
        dem: Option<PathBuf>,
    },
    /// Builds the calibrated survey weights from census counts and the farm
    /// sample.
    SurveyWeights {
        /// Census counts: municipality_id,size,spec,year,count (2010/2020).
        #[arg(long)]
        census: PathBuf,
        #[arg(long)]
        crosswalk: PathBuf,
        /// Farm sample: farm_id,area_id,size,spec,year,variable,value.
        #[arg(long)]
        sample: PathBuf,
    },
    /// Design-based domain totals, means, and variances.
    SurveyEstimate {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        sample: PathBuf,
    },
    /// Variance-model regularization of the direct survey variances.
    Gvf {
        #[arg(long)]
        estimates: PathBuf,
    },
    /// Full-join panel assembly plus the missing-data report.
    PanelBuild {
        #[arg(long)]
        areas: PathBuf,
        /// Long-format fragment tables: source,area_id,year,variable,value.
        #[arg(long, required = true)]
        fragments: Vec<PathBuf>,
    },
    /// Runs the validation battery over an assembled panel.
    Validate {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        areas: PathBuf,
        /// Held-out prediction table from `krige` for the fidelity check.
        #[arg(long)]
        cv_predictions: Option<PathBuf>,
        /// Fail (exit 5) when any violation is found.
        #[arg(long)]
        strict: bool,
    },
    /// Generates the synthetic desk-scale dataset and runs the whole
    /// pipeline end to end.
    Demo,
}

/// Marker for configuration problems (exit code 3).
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Marker for strict-mode validation failures (exit code 5).
#[derive(Debug)]
struct StrictViolations(usize);

impl std::fmt::Display for StrictViolations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} validation violation(s) under --strict", self.0)
    }
}

impl std::error::Error for StrictViolations {}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed, cli.out_dir.as_deref())
        .map_err(|e| anyhow::Error::new(ConfigError(e)))?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Krige { field, areas } => commands::krige::run(&cfg, &field, &areas),
        Command::AggregateTemporal { series } => commands::temporal::run(&cfg, &series),
        Command::AggregateAreal {
            areas,
            crosswalk,
            municipal,
            landcover,
            reclass,
            schedule,
            cell_area,
            dem,
        } => commands::areal::run(
            &cfg,
            &commands::areal::ArealInputs {
                areas: &areas,
                crosswalk: crosswalk.as_deref(),
                municipal: municipal.as_deref(),
                landcover: landcover.as_deref(),
                reclass: reclass.as_deref(),
                schedule: schedule.as_deref(),
                cell_area,
                dem: dem.as_deref(),
            },
        ),
        Command::SurveyWeights {
            census,
            crosswalk,
            sample,
        } => commands::survey::run_weights(&cfg, &census, &crosswalk, &sample),
        Command::SurveyEstimate {
            weights,
            counts,
            sample,
        } => commands::survey::run_estimate(&cfg, &weights, &counts, &sample),
        Command::Gvf { estimates } => commands::gvf::run(&cfg, &estimates),
        Command::PanelBuild { areas, fragments } => {
            commands::panel::run_build(&cfg, &areas, &fragments)
        }
        Command::Validate {
            panel,
            areas,
            cv_predictions,
            strict,
        } => {
            let violations =
                commands::panel::run_validate(&cfg, &panel, &areas, cv_predictions.as_deref())?;
            let strict = strict || cfg.validate.strict;
            if strict && !violations.is_empty() {
                return Err(anyhow::Error::new(StrictViolations(violations.len())));
            }
            Ok(())
        }
        Command::Demo => commands::demo::run(&cfg),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.is::<ConfigError>() {
        return 3;
    }
    if err.is::<StrictViolations>() {
        return 5;
    }
    for cause in err.chain() {
        if let Some(io_err) = cause.downcast_ref::<std::io::Error>() {
            if io_err.kind() == std::io::ErrorKind::NotFound {
                return 4;
            }
        }
        if let Some(arealize::Error::Io(io_err)) = cause.downcast_ref::<arealize::Error>() {
            if io_err.kind() == std::io::ErrorKind::NotFound {
                return 4;
            }
        }
        // table reads fold the OS error text into the message
        if let Some(arealize::Error::Table(msg)) = cause.downcast_ref::<arealize::Error>() {
            if msg.contains("No such file") {
                return 4;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
