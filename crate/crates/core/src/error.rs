use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix entry {index} is not an integer: {value}")]
    NonIntegerMatrix { index: usize, value: f64 },

    #[error("matrix is not unimodular (det = {det})")]
    NotUnimodular { det: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("invalid orbit: {0}")]
    InvalidOrbit(String),

    #[error("chart domain violated: |v| = {norm:e} exceeds radius {radius:e}")]
    ChartDomain { norm: f64, radius: f64 },

    #[error("backward generation failed at k = {k}: {reason}")]
    BackwardGeneration { k: i64, reason: String },

    #[error("gluing precondition violated: {0}")]
    GluingPrecondition(String),

    #[error("local map violates the closeness condition on ball {ball}: excess {excess:e}")]
    Cond1 { ball: usize, excess: f64 },

    #[error("remainder bound violated: sup |phi| = {measured:e} > {allowed:e} on radius {radius:e}")]
    RemainderBound {
        measured: f64,
        allowed: f64,
        radius: f64,
    },

    #[error("periodic point is not hyperbolic (eigenvalue modulus {modulus})")]
    Nonhyperbolic { modulus: f64 },

    #[error("vector is not in the unstable subspace (deviation {deviation:e})")]
    NotUnstable { deviation: f64 },

    #[error("solver did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
