use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sensor geometry (zero-norm position, non-finite coordinate).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Tensor/matrix shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file; carries the 1-based line number where known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Inconsistent or invalid data encountered at runtime.
    #[error("data error: {0}")]
    Data(String),

    /// A NaN or infinity showed up where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (config, geometry, shapes,
    /// parse failures) as opposed to runtime faults.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_) | Error::Shape(_) | Error::Config(_) | Error::Parse { .. }
        )
    }
}
