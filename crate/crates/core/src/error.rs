use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("part {part} is labeled in the cloud but owns no model vertices")]
    EmptyPart { part: u8 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("degenerate initialization: {0}")]
    DegenerateInit(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NumericFailure { step: usize, detail: String },

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("camera is inside the mesh of human {human}")]
    CameraInsideMesh { human: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by geometry that cannot support the requested
    /// computation (collinear centroids, rank-deficient alignment).
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::DegenerateInit(_))
    }
}
