use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel not irreducible: support generates {gcd}Z")]
    NotIrreducible { gcd: i64 },
    #[error("kernel cannot be normalized: {0}")]
    NotNormalizable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel table {path}: line {line}: {message}")]
    TableParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("kernel spec {spec:?}: {message}")]
    SpecParse { spec: String, message: String },
    #[error("invalid stopping rule: {0}")]
    InvalidStopping(String),
    #[error("exact solve needs {unknowns} unknowns, ceiling is {ceiling}")]
    SolveTooLarge { unknowns: usize, ceiling: usize },
    #[error("exact solve residual {residual:e} exceeds 1e-8")]
    SingularSystem { residual: f64 },
    #[error("exterior site {site} reachable from the interval belongs to no target class")]
    UnclassifiedExit { site: i64 },
    #[error("potential kernel window overflow: escaped mass {escaped:e} at term {term}; need half-width of at least {required}")]
    WindowOverflow {
        term: usize,
        escaped: f64,
        required: usize,
    },
    #[error("hybrid zone exceeded cap: width {width} > {cap}")]
    HybridCap { width: i64, cap: i64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("replicate {replicate} panicked (master seed {seed}, stream {stream}): {message}")]
    ReplicatePanic {
        replicate: u64,
        seed: u64,
        stream: String,
        message: String,
    },
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
