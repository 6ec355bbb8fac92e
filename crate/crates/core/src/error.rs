use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("ambiguous orientation: {0}")]
    Ambiguous(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaVersion { found: u64, supported: u64 },

    #[error("size error: {0}")]
    Size(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("retrieval error: {0}")]
    Retrieval(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite loss at epoch {epoch}, scene {scene}")]
    NonFiniteLoss { epoch: usize, scene: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Geometry(_) => "geometry",
            Error::Ambiguous(_) => "ambiguous",
            Error::Parse { .. } => "parse",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Size(_) => "size",
            Error::Dimension(_) => "dimension",
            Error::LinearAlgebra(_) => "linear_algebra",
            Error::DegenerateMatrix(_) => "degenerate_matrix",
            Error::DegenerateDirection(_) => "degenerate_direction",
            Error::Retrieval(_) => "retrieval",
            Error::Data(_) => "data",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NonFinite(_) => "non_finite",
            Error::Index(_) => "index",
            Error::Io(_) => "io",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
