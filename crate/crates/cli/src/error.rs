use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] dtd_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("png encoding failed for {path}: {message}")]
    Png { path: PathBuf, message: String },

    #[error("missing artifact {path}; run `{hint}` first")]
    MissingArtifact { path: PathBuf, hint: &'static str },

    #[error("{0} self-test check(s) failed")]
    SelfTestFailed(usize),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage, 2 data or format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(dtd_core::Error::PatternMissing(_))
            | CliError::Core(dtd_core::Error::TargetOutOfRange { .. }) => 1,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Png { .. } | CliError::MissingArtifact { .. } => 2,
            CliError::SelfTestFailed(_) => 3,
        }
    }
}
