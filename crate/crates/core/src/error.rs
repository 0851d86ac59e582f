use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("autoregressive eigenvalue {value} at degree {degree} is not stable (|phi| >= 1)")]
    Unstable { degree: usize, value: f64 },

    #[error("spectral density has a pole at zero frequency")]
    Pole,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("covariance matrix is not positive definite{}", .degree.map(|n| format!(" (degree {n})")).unwrap_or_default())]
    NotPositiveDefinite { degree: Option<usize> },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("quadrature grid is exact up to degree {exact}, requested degree {requested}")]
    GridExactness { exact: usize, requested: usize },

    #[error("parameter outside admissible bounds: {0}")]
    Bounds(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("statistic not computed: {0}")]
    NotComputed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("too many failed repetitions: {failed} of {total}")]
    RunFailed { failed: usize, total: usize },

    #[error("I/O error on {path}: {source}")]
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

    /// Process exit code: 1 usage, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Config(_) | Error::Parse(_) | Error::Index(_) | Error::NotComputed(_) => 1,
            Error::Dimension(_) | Error::Bounds(_) | Error::Domain(_) => 1,
            _ => 2,
        }
    }
}
