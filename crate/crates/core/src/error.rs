use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The integral was classified as divergent; `partial` is the value
    /// accumulated before the classification.
    #[error("integral diverges (partial value {partial:e})")]
    Divergent { partial: f64 },

    #[error(
        "adaptive quadrature did not converge after {subdivisions} subdivisions \
         (value {partial:e}, error estimate {error:e})"
    )]
    NotConverged {
        partial: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The integrability condition behind the derivative formula fails, so
    /// the formula carries no information for this model/weight pair.
    #[error("derivative formula is vacuous: {0}")]
    Vacuous(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON (line {line}, column {column}): {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
