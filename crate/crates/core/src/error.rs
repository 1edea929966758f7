use thiserror::Error;

use crate::layers::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown dataset identifier `{0}`")]
    UnknownDataset(String),

    #[error("dataset index {0} out of range")]
    DatasetIndex(usize),

    #[error("value {0} is not in the value support")]
    ValueOutsideSupport(f64),

    #[error("value index {0} out of range")]
    ValueIndex(usize),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("no neighboring pairs exist (isolated universe)")]
    IsolatedUniverse,

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("initial values are not in the feasible universe: {0}")]
    Membership(Violation),

    #[error("migration refused: {0}")]
    MigrationRefused(String),

    #[error("mismatched dataset universes")]
    MismatchedUniverse,

    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("layer construction did not converge within {0} layers")]
    NotConvergent(usize),

    #[error("check refused: {0}")]
    Refused(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
