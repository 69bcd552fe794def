use std::process::ExitCode;

/// CLI failure modes, split by exit code: configuration and usage problems
/// exit 2, broken invariants and replay mismatches exit 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] splinelab::error::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("config hash mismatch: stored {stored}, recomputed {recomputed}")]
    HashMismatch { stored: String, recomputed: String },
    #[error("replay mismatch in row {row}: {fields}")]
    ReplayMismatch { row: usize, fields: String },
    #[error("strict mode: {0}")]
    Strict(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) | CliError::Io(_) => ExitCode::from(2),
            CliError::Core(_)
            | CliError::Invariant(_)
            | CliError::HashMismatch { .. }
            | CliError::ReplayMismatch { .. }
            | CliError::Strict(_) => ExitCode::from(1),
        }
    }
}
