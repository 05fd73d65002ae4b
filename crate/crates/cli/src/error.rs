use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// A file exists but its contents are malformed.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: u64, loss: f64 },
    #[error(transparent)]
    Core(biasret_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    /// Process exit status: 2 configuration, 3 I/O or malformed file,
    /// 4 divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Diverged { .. } => 4,
            CliError::Core(_) => 1,
        }
    }
}

impl From<biasret_core::Error> for CliError {
    fn from(e: biasret_core::Error) -> Self {
        match e {
            biasret_core::Error::Config(msg) => CliError::Config(msg),
            biasret_core::Error::Diverged { step, loss } => CliError::Diverged { step, loss },
            other => CliError::Core(other),
        }
    }
}

/// Attach `path` to an I/O error.
pub(crate) fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}
