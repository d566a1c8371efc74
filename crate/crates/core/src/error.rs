use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("material error: {0}")]
    Material(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("linear solver failed: {message} (relative residual {residual:e})")]
    Solver { message: String, residual: f64 },
    #[error("adjoint undefined: {0}")]
    AdjointUndefined(String),
    #[error("infeasible volume target: {0}")]
    Infeasible(String),
    #[error("bisection failed: {0}")]
    Bisection(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 1 for invalid input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Mesh(_) | Error::Material(_) | Error::Io { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
