use std::path::{Path, PathBuf};

use crate::ply::PlyFileError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ply(#[from] PlyFileError),
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] mbgs_core::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Whether the failure is numerical (divergence, failed gradient check,
    /// degenerate transforms) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        use mbgs_core::Error as C;
        matches!(
            self,
            Error::Core(C::Optimization(_) | C::GradientCheck(_) | C::DegenerateBlend | C::DegenerateTransform(_))
        )
    }
}
