use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("field has {found} values but the grid has {expected} nodes")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("horizon {horizon} violates the blow-up guard (limit {limit})")]
    Horizon { horizon: f64, limit: f64 },

    #[error("metric lost positivity at t = {t}")]
    NonPositiveMetric { t: f64 },

    #[error("stability could not be restored after {halvings} step halvings at t = {t}")]
    Stability { t: f64, halvings: u32 },

    #[error("non-finite value at node {node}, t = {t}")]
    NonFinite { node: usize, t: f64 },

    #[error("backward time must be positive, got tau = {0}")]
    NonPositiveTau(f64),

    #[error("point lies within the cut-locus exclusion band")]
    CutLocus,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hypothesis violated at node {node}, time index {time_index}: excess {excess:e}")]
    Hypothesis {
        node: usize,
        time_index: usize,
        excess: f64,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
