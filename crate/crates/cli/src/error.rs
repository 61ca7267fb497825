use std::path::{Path, PathBuf};

use qfc_link::detection::ReadError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Analysis(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Analysis(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Classifies a library error, prefixing `context` (a config path or
    /// file name).
    pub(crate) fn from_core(context: &str, err: qfc_link::Error) -> Self {
        use qfc_link::Error as E;
        let msg = match &err {
            E::InvalidParameter { field, reason } if !context.is_empty() => {
                format!("{context}.{field}: {reason}")
            }
            _ if context.is_empty() => err.to_string(),
            _ => format!("{context}: {err}"),
        };
        match err {
            E::NonConvergence { .. } | E::SingularMatrix | E::Degenerate(_) | E::InsufficientData(_) => {
                CliError::Analysis(msg)
            }
            _ => CliError::Validation(msg),
        }
    }

    pub(crate) fn from_read(path: &Path, err: ReadError) -> Self {
        match err {
            ReadError::Io(e) => CliError::io(path, e),
            ReadError::Format(e) => CliError::from_core(&path.display().to_string(), e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a config path to library errors.
pub(crate) trait Context<T> {
    fn at(self, context: &str) -> CliResult<T>;
}

impl<T> Context<T> for qfc_link::Result<T> {
    fn at(self, context: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(context, e))
    }
}
