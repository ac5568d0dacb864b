//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the harmonization engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty variogram: no point pairs within the cutoff distance")]
    EmptyVariogram,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("variogram fit failed: {0}")]
    FitFailure(String),

    #[error("singular kriging system ({0})")]
    SingularSystem(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("covariance-model selection failed: every candidate was infeasible")]
    SelectionFailure,

    #[error("population margins disagree: {0}")]
    MarginMismatch(String),

    #[error("infeasible support: {0}")]
    InfeasibleSupport(String),

    #[error("raking did not converge within {0} iterations")]
    RakeDivergence(usize),

    #[error("municipalities missing from the crosswalk: {0}")]
    UnmappedUnit(String),

    #[error("map classes missing from the reclassification table: {0}")]
    UnmappedClass(String),

    #[error("class areas exceed the unit area: {0}")]
    CoverageOverflow(String),

    #[error("no snapshot covers target year {0}")]
    ScheduleGap(i32),

    #[error("observation in stratum {0} has no calibrated weight")]
    UnweightedObservation(String),

    #[error("variance model unavailable: {0}")]
    GvfUnavailable(String),

    #[error("panel key collision: variable {variable} for ({area_id}, {year}) supplied by both {source_a} and {source_b}")]
    PanelCollision {
        variable: String,
        area_id: String,
        year: i32,
        source_a: String,
        source_b: String,
    },

    #[error("malformed table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed GeoJSON: {0}")]
    GeoJson(String),
}

pub type Result<T> = std::result::Result<T, Error>;
