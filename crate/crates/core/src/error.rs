//! Error taxonomy shared by every module in the crate.
//!
//! The variants are grouped so that callers (in particular the command-line
//! front end) can map them onto coarse failure classes: configuration or
//! usage problems, data problems discovered while reading or aligning
//! series, and numerical failures raised by the estimation machinery.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum MfsError {
    /// A caller violated an argument contract (dimension mismatch, empty
    /// input, parameter outside its legal range, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// A date is missing inside the observed range of a series.
    #[error("gap in series '{series}': expected observation at {date}")]
    Gap { series: String, date: String },

    /// Dates in a series are not strictly increasing.
    #[error("non-monotone dates in series '{series}' near {date}")]
    Ordering { series: String, date: String },

    /// Series disagree with the declared frequency grid or with each other.
    #[error("alignment: {0}")]
    Alignment(String),

    /// A requested index lies outside the observed sample.
    #[error("boundary: {0}")]
    Boundary(String),

    /// A variance or scale collapsed below the numerical floor.
    #[error("degenerate scale: {0}")]
    Degeneracy(String),

    /// A design matrix is numerically rank deficient.
    #[error("singular design: {0}")]
    Singular(String),

    /// A sampler produced a non-finite value.
    #[error("non-finite value in {context} at iteration {iteration}")]
    NonFinite { context: String, iteration: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MfsError>;
