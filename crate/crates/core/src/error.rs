use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular reparametrization: {0}")]
    Singular(String),
    #[error("zero index density at observation {0}")]
    DegeneratePoint(usize),
    #[error("non-finite moment row at observation {0}")]
    NonFiniteRow(usize),
    #[error("under-determined moment system: {n_eff} rows for {dim} moment conditions")]
    UnderDetermined { n_eff: usize, dim: usize },
    #[error("degenerate moment variance: {0}")]
    DegenerateVariance(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("collinear regressors: {0}")]
    Collinear(String),
    #[error("input error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Ingestion { .. } | Error::Data(_) | Error::Io(_) | Error::NonFiniteRow(_) => 3,
            Error::Replication { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Ingestion {
            row,
            column: String::from("-"),
            message: err.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Config(err.to_string())
    }
}
