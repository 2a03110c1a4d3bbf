//! Error type shared across the crate.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Point or matrix dimensionality does not match the search space.
    DimensionMismatch { expected: usize, got: usize },
    /// Invalid bounds or parameters when constructing a domain object.
    InvalidParameter(String),
    /// Cholesky factorization failed even at the largest jitter level.
    NotPositiveDefinite { last_jitter: f64 },
    /// An operation that needs observations was called on an empty dataset.
    EmptyDataset,
    /// A belief density evaluated to a non-finite value.
    NonFiniteDensity(String),
    /// Requested more optimal-value samples than ensemble members.
    NotEnoughDraws { requested: usize, available: usize },
    /// A query point lies outside the benchmark bounds.
    OutOfBounds { dim: usize, value: f64 },
    /// The objective callable failed; the run is halted after recording.
    ObjectiveFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NotPositiveDefinite { last_jitter } => write!(
                f,
                "matrix not positive definite after jitter up to {last_jitter:e}"
            ),
            Error::EmptyDataset => write!(f, "operation requires at least one observation"),
            Error::NonFiniteDensity(msg) => write!(f, "non-finite belief density: {msg}"),
            Error::NotEnoughDraws {
                requested,
                available,
            } => write!(
                f,
                "requested {requested} optimal-value samples but ensemble has {available} draws"
            ),
            Error::OutOfBounds { dim, value } => {
                write!(f, "query coordinate {dim} = {value} is outside the bounds")
            }
            Error::ObjectiveFailed(msg) => write!(f, "objective evaluation failed: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
