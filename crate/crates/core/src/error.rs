//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CfError {
    #[error("empty input: no point records found")]
    EmptyInput,

    #[error("row {row}, column {col}: cannot parse {value:?} as a coordinate")]
    MalformedRecord { row: usize, col: usize, value: String },

    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount { row: usize, expected: usize, found: usize },

    #[error("point {index} lies outside the window in coordinate {coord}: {value}")]
    OutsideWindow { index: usize, coord: usize, value: f64 },

    #[error("invalid window: lower bound must be strictly below upper bound in every coordinate")]
    InvalidWindow,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    QuadratureFailure { requested: f64, achieved: f64 },

    #[error("spectrum truncation target unreachable with J = {j} one-dimensional roots; increase J")]
    TruncationUnreachable { j: usize },

    #[error("cumulant series did not converge at t = {t}")]
    SeriesDivergence { t: f64 },

    #[error("simulation infeasible: {0}")]
    SimulationInfeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CfError>;
