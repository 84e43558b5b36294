use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("duplicate arc {tail} -> {head}")]
    DuplicateArc { tail: usize, head: usize },

    #[error("source vector is unbalanced: sum = {sum}")]
    Unbalanced { sum: f64 },

    #[error("{what} of size {size} exceeds enumeration cap {cap}")]
    Capacity {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("source vector is identically zero")]
    DegenerateSource,

    #[error("component containing node {node} has net source {net} != 0")]
    InconsistentSource { node: usize, net: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear solve failed: scaled residual {residual:e}")]
    Numerical { residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("component containing node {node} has no boundary node")]
    Underdetermined { node: usize },

    #[error("transshipment problem is infeasible")]
    Infeasible,

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("extension requires a connected optimal set")]
    DisconnectedOptimalSet,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("lower bound {low} on arc at line {line} is not supported")]
    UnsupportedCapacity { line: usize, low: String },

    #[error("generator gave up after {attempts} attempts")]
    Generator { attempts: usize },
}
