//! Harmonization engine turning heterogeneous spatio-temporal inputs --
//! gridded environmental fields, municipal tables, raster maps, and farm
//! survey microdata -- into a consistent annual areal panel.
//!
//! The pipeline combines:
//!
//! - block kriging change-of-support with cross-validated covariance-model
//!   and neighbourhood selection ([`kriging`], [`tuning`]);
//! - temporal aggregation of high-frequency series with derived
//!   meteorological variables ([`temporal`]);
//! - crosswalk aggregation, raster reclassification and share accounting
//!   ([`areal`]);
//! - post-stratified survey weighting and design-based domain estimation
//!   ([`survey`]);
//! - generalized-variance-function regularization of direct variances
//!   ([`gvf`]);
//! - panel assembly, missing-data accounting and validation ([`panel`]).
//!
//! Everything is deterministic: all randomness flows from one run seed
//! through named sub-streams ([`rng`]).

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix algebra in the dense kernels
#![allow(clippy::needless_range_loop)]

pub mod areal;
pub mod error;
pub mod geom;
pub mod gvf;
pub mod kriging;
pub mod linalg;
pub mod panel;
pub mod rng;
pub mod survey;
pub mod table;
pub mod temporal;
pub mod tuning;
pub mod variogram;

pub use error::{Error, Result};
pub use geom::{AreaUnit, Crosswalk, GridFieldSnapshot, Point};
pub use gvf::{GvfDomain, GvfModel, VarianceTriple};
pub use kriging::BlockPrediction;
pub use panel::{Fragment, Panel, PanelCell};
pub use survey::{DomainEstimate, SizeClass, SpecClass, StratumCount, WeightRecord};
pub use temporal::{SummaryStats, TimedSeries};
pub use tuning::{AlignmentResult, TuningConfig};
pub use variogram::{EmpiricalVariogram, Family, VariogramSpec};
