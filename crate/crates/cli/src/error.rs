use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input files.
    #[error("{0}")]
    Validation(String),
    /// Unconverged, singular or otherwise failed numerics.
    #[error("{0}")]
    Numerical(String),
    /// `reproduce` ran but some anchors missed their tolerance.
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }

    /// Wrap a library error, prefixing where it came from.
    pub fn core(context: &str, e: abrate::Error) -> Self {
        let msg = format!("{context}: {e}");
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Validation(msg)
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attach context to core results.
pub trait Context<T> {
    fn ctx(self, context: &str) -> CliResult<T>;
}

impl<T> Context<T> for abrate::Result<T> {
    fn ctx(self, context: &str) -> CliResult<T> {
        self.map_err(|e| CliError::core(context, e))
    }
}
