use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("point x = {x} is not strictly inside ({a}, {b})")]
    DomainBoundary { x: f64, a: f64, b: f64 },
    #[error("assembly failure: {0}")]
    AssemblyFailure(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("post-solve check failed: {0}")]
    CheckFailed(String),
    #[error("time step too large: h * alpha = {0} must be < 1")]
    StepTooLarge(f64),
    #[error("invalid ledger: {0}")]
    InvalidLedger(String),
    #[error("non-positive time t = {0}")]
    NonPositiveTime(f64),
    #[error("sign precondition violated: {0}")]
    Negativity(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
