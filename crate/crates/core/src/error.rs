use thiserror::Error;

/// Errors produced while building manifolds, operators, spectra and capacities.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("manifold has no construction metadata and cannot be refined")]
    CannotRefine,

    #[error("vertex index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("potential violates min V > 0 (min = {min})")]
    AssumptionViolated { min: f64 },

    #[error("zero vector has no Rayleigh quotient")]
    DegenerateDivision,

    #[error("hole set covers every vertex; no free degrees of freedom remain")]
    EmptyDomain,

    #[error("requested {requested} eigenpairs but the pencil has dimension {dim}")]
    Size { requested: usize, dim: usize },

    #[error("eigensolver did not converge after {iterations} restarts (worst relative residual {worst_residual:e})")]
    Convergence {
        iterations: usize,
        worst_residual: f64,
    },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("first eigenvector is not sign-definite (min |e1| = {min_abs:e})")]
    SignDefiniteness { min_abs: f64 },

    #[error("test functions span fewer than {k} dimensions (min Gram eigenvalue {min_gram_eig:e})")]
    CertificateUnavailable { k: usize, min_gram_eig: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
