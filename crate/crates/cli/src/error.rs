use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cbamnet::Error),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Short category printed in front of every diagnostic.
    pub fn kind(&self) -> &'static str {
        use cbamnet::Error as E;
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Parse { .. } => "parse",
                E::Schema(_) => "schema",
                E::Integrity(_) => "integrity",
                E::Config(_) => "config",
                E::Range(_) => "range",
                E::Shape { .. } => "shape",
                E::Mask(_) => "mask",
                E::Contract(_) => "contract",
                E::Training { .. } => "training",
                E::Estimation(_) => "estimation",
                E::Io { .. } => "io",
                E::Serde(_) => "serialization",
            },
        }
    }
}
