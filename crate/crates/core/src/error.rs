use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// An operator was applied outside its domain (e.g. division by zero contrast).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("inversion diverged at iteration {iteration}: cost {cost:.6e} exceeds {factor}x the minimum {minimum:.6e}")]
    Divergence {
        iteration: usize,
        cost: f64,
        minimum: f64,
        factor: f64,
    },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Geometry(_) => "geometry",
            Error::Domain(_) => "domain",
            Error::Data(_) => "data",
            Error::Numerical(_) => "numerical",
            Error::Divergence { .. } => "divergence",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
