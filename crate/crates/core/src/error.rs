use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("infinite divergence: output {index} has positive mass but zero reference probability")]
    InfiniteDivergence { index: usize },
    #[error("matrix is singular (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("{theta} is not an eigenvalue (residual {residual:.3e})")]
    NotEigenvalue { theta: f64, residual: f64 },
    #[error(
        "eigenvalue collision between type-I and type-III blocks (|{a} - {b}| < 1e-9); diagonalization unavailable"
    )]
    EigenCollision { a: f64, b: f64 },
    #[error("diagonalization check failed: max |A^-1 J A - Theta| = {0:.3e}")]
    Diagonalization(f64),
    #[error("no type-II indices: the reduced recurrence is undefined")]
    NoTypeTwo,
    #[error("reduced matrix R is singular: canonical form unavailable")]
    CanonicalUnavailable,
    #[error("iteration diverged at step {step}: norm {norm:.3e}")]
    Diverged { step: usize, norm: f64 },
    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NoConvergence { .. }
                | Error::NotEigenvalue { .. }
                | Error::EigenCollision { .. }
                | Error::Diagonalization(_)
                | Error::CanonicalUnavailable
                | Error::Diverged { .. }
        )
    }
}
