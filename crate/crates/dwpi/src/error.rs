//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DwpiError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid preference vector: {0}")]
    InvalidPreference(String),

    #[error("invalid simplex grid: 1/grid_step = {reciprocal} is not an integer")]
    InvalidGridStep { reciprocal: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid action index {action}, environment has {actions} actions")]
    InvalidAction { action: usize, actions: usize },

    #[error("oracle search budget exhausted: explored {explored} nodes, budget {budget}")]
    OracleBudget { explored: usize, budget: usize },

    #[error("preference {0:?} is farther than grid_step/2 from every lattice point")]
    OffLattice(Vec<f64>),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty {0}")]
    Empty(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("return bound violated on objective {objective}: value {value} outside [{lo}, {hi}]")]
    BoundViolated {
        objective: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("projection produced an all-zero candidate weight: demonstration dominates no direction")]
    ZeroCandidate,

    #[error("artifact format error: {0}")]
    Artifact(String),

    #[error("spec hash mismatch: artifact was built for {artifact}, current environment is {current}")]
    SpecHashMismatch { artifact: String, current: String },

    #[error("malformed demo file at line {line}: {message}")]
    DemoParse { line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DwpiError>;

impl DwpiError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        DwpiError::Io {
            path: path.into(),
            source,
        }
    }
}
