use std::path::Path;

use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }

    pub fn from_hound(e: hound::Error, path: &Path) -> Self {
        let msg = format!("{}: {e}", path.display());
        match e {
            hound::Error::IoError(_) => CliError::Io(msg),
            _ => CliError::Validation(msg),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<diffinpaint::Error> for CliError {
    fn from(e: diffinpaint::Error) -> Self {
        use diffinpaint::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::NonFinite { .. } | E::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}
