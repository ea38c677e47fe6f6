use std::path::PathBuf;

use thiserror::Error;

use crate::field::FieldKind;

#[derive(Debug, Error)]
pub enum PmeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("expected a {expected:?} field, got {found:?}")]
    WrongKind { expected: FieldKind, found: FieldKind },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("negative value {value} at cell {index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("point {point:?} lies outside the grid box")]
    OutOfDomain { point: Vec<f64> },

    #[error("({point:?}, t = {t}) lies outside the admissible region: {reason}")]
    OutsideAdmissible {
        point: Vec<f64>,
        t: f64,
        reason: String,
    },

    #[error("sample {point:?} is not in the positivity set")]
    NotInPositivitySet { point: Vec<f64> },

    #[error("box too small: {0}")]
    BoxTooSmall(String),

    #[error("no boundary: positivity set is {0}")]
    NoBoundary(&'static str),

    #[error("empty point set")]
    EmptySet,

    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("initial support violates the box margin: {0}")]
    MarginViolation(String),

    #[error("non-finite value detected at step {step} (t = {t})")]
    NonFinite { step: u64, t: f64 },

    #[error("initial data are not ordered: rho0 exceeds rho0' by {excess} at cell {index}")]
    Unordered { index: usize, excess: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PmeError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> PmeError {
    PmeError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
