use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("root bracket exceeded the overflow guard {guard:e} while inverting for {target:e}")]
    NonConvergence { target: f64, guard: f64 },

    #[error("assumption check inconsistent: {0}")]
    Inconsistent(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("cut-off ratio {ratio:e} exceeds the sanity limit {limit:e} ({which})")]
    UnboundedRatio { which: &'static str, ratio: f64, limit: f64 },

    #[error("snapshot series ends at t = {available} before the required t = {needed}")]
    Coverage { needed: f64, available: f64 },

    #[error("solution reached r = {radius} (domain edge {edge}) at t = {t}")]
    DomainTooSmall { radius: f64, edge: f64, t: f64 },

    #[error("resampling needs data at |x| = {needed} but the grid ends at {available}")]
    Resampling { needed: f64, available: f64 },

    #[error("mean-zero condition violated: {0}")]
    MeanZero(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sweep finished with {} failed run(s): {}", failures.len(), failures.join("; "))]
    Sweep { failures: Vec<String> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
