use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged at epoch {epoch}; last finite checkpoint written to {path}")]
    Diverged { epoch: usize, path: PathBuf },

    #[error("{0}")]
    Check(String),

    #[error(transparent)]
    Core(#[from] vfnet_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for usage and configuration problems, 3 for numeric failures.
    pub fn exit_code(&self) -> u8 {
        use vfnet_core::Error as E;
        match self {
            CliError::Diverged { .. } | CliError::Check(_) => 3,
            CliError::Core(E::NonFinite(_) | E::Saturated | E::DegenerateGeometry(_)) => 3,
            _ => 2,
        }
    }
}
