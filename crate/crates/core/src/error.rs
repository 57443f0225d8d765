use thiserror::Error;

/// Errors produced by scene construction, the search pipeline and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no admissible region: every region has zero sampling mass for class `{0}`")]
    NoAdmissibleRegion(String),

    #[error("degenerate particle set: all weights are zero")]
    DegenerateParticles,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("trial failed: {0}")]
    Trial(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
