use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("request {id}: marginal value undefined for zero demand")]
    UndefinedRatio { id: usize },
    #[error("approximation ratio is unbounded: {0}")]
    UnboundedRatio(String),
    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),
    #[error("unsupported instance format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed instance document: {0}")]
    Json(#[from] serde_json::Error),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The allocator could not place a demand it had already judged feasible.
    #[error("internal contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance has {n} requests, above the enumeration limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("unknown request id {0}")]
    UnknownRequest(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("bound undefined: {0}")]
    BoundUndefined(String),
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}
