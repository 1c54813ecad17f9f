//! Error type shared by every module in the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors from trace validation, system assembly, solving, fitting and
/// detection.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A trace or signal is shorter than the operation requires.
    TooShort { needed: usize, got: usize },
    /// Paired inputs disagree on length.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Traces that must share a sampling grid do not.
    SamplingMismatch(&'static str),
    /// A field value violates a documented invariant.
    InvalidInput(&'static str),
    /// A per-sample position weight fell below the configured floor.
    WeightFloor { index: usize, value: f64, floor: f64 },
    /// The precision matrix lost positive definiteness at this sample.
    SingularSystem { index: usize },
    /// A solve finished but failed its residual check.
    ResidualCheck { residual: f64, bound: f64 },
    /// No valid glints to estimate a corneal-reflection center from.
    MissingCr,
    /// Calibration data is rank deficient or otherwise unusable.
    DegenerateCalibration(&'static str),
    /// A metrics window does not fit the trace.
    InvalidWindow(&'static str),
    /// Pursuit segment too short to detrend.
    InvalidSegment { needed: usize, got: usize },
    /// Input distribution unsuitable for threshold estimation.
    DegenerateDistribution(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TooShort { needed, got } => {
                write!(f, "input too short: need at least {needed} samples, got {got}")
            }
            Error::DimensionMismatch { what, expected, got } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {got}")
            }
            Error::SamplingMismatch(what) => {
                write!(f, "sampling grid mismatch: {what}")
            }
            Error::InvalidInput(what) => write!(f, "invalid input: {what}"),
            Error::WeightFloor { index, value, floor } => {
                write!(f, "position weight {value} at sample {index} is below the floor {floor}")
            }
            Error::SingularSystem { index } => {
                write!(f, "precision matrix is not positive definite at sample {index}")
            }
            Error::ResidualCheck { residual, bound } => {
                write!(f, "solve residual {residual:e} exceeds bound {bound:e}")
            }
            Error::MissingCr => write!(f, "no valid glints in frame"),
            Error::DegenerateCalibration(what) => {
                write!(f, "degenerate calibration: {what}")
            }
            Error::InvalidWindow(what) => write!(f, "invalid window: {what}"),
            Error::InvalidSegment { needed, got } => {
                write!(f, "segment too short: need at least {needed} samples, got {got}")
            }
            Error::DegenerateDistribution(what) => {
                write!(f, "degenerate distribution: {what}")
            }
        }
    }
}

impl std::error::Error for Error {}
