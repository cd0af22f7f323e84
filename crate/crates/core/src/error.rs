use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ribbon parameters: {0}")]
    InvalidSpec(String),

    #[error("crease constraints violated at {}", format_violations(.0))]
    Infeasible(Vec<Violation>),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("material coordinates are not strictly increasing at index {0}")]
    NonMonotone(usize),

    #[error("vertex selector out of range: {0}")]
    Selector(String),

    #[error("scene error: {0}")]
    Scene(String),

    #[error("failed to parse scene: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("failed to serialize scene: {0}")]
    Serialize(#[from] toml::ser::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("solver failure: {0}")]
    Solver(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
