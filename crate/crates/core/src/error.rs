use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown topology preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("topology is disconnected: {0}")]
    Disconnected(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("normal matrix is singular; use a penalty or drop collinear features")]
    SingularMatrix,

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("input contains missing values; impute before fitting")]
    MissingValues,

    #[error("matrix has no observed cells")]
    NoObservedCells,

    #[error("mask has no missing cells; imputation error is undefined")]
    NoMissingCells,

    #[error("target has zero variance; R^2 is undefined")]
    ZeroVariance,

    #[error("estimator failed on column {column}: {source}")]
    Estimator {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
