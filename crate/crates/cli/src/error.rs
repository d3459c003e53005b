use std::path::Path;

use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<mpo_qst::Error> for CliError {
    fn from(e: mpo_qst::Error) -> Self {
        use mpo_qst::Error as E;
        match e {
            E::InvalidArgument(_) | E::InfeasibleRanks { .. } | E::SizeCap { .. } => CliError::Config(e.to_string()),
            E::Format(_) | E::Io(_) | E::ShapeMismatch(_) | E::IndexOutOfRange { .. } | E::Unphysical { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
