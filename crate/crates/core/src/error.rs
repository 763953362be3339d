use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("erdos-renyi graph with n={n}, p={p} not connected after {retries} draws (seed {seed})")]
    Disconnected { n: usize, p: f64, seed: u64, retries: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix dimension {n} exceeds eigensolver bound {bound}")]
    TooLarge { n: usize, bound: usize },

    #[error("all eigenvalues classified as zero")]
    ZeroMatrix,

    #[error("vector has a kernel component of relative size {relative:.3e} (limit {limit:.1e})")]
    KernelComponent { relative: f64, limit: f64 },

    #[error("invalid oracle: {0}")]
    InvalidOracle(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite iterate at iteration {iter}")]
    Diverged { iter: usize },

    #[error("reference solve did not reach tolerance {tol:.1e} within {iters} iterations (best gradient norm {best:.3e})")]
    ReferenceFailed { tol: f64, iters: usize, best: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("insufficient records for rate fit: {0}")]
    InsufficientRecords(String),

    #[error("gossip validation failed: {0}")]
    Validation(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
