use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown unit tag `{0}`")]
    UnknownUnit(String),

    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// `k_f/k_i` is infinite: zero collision energy with a finite Zeeman gap.
    #[error("wavevector ratio diverges at zero collision energy with nonzero energy release")]
    DivergentRatio,

    #[error("closed-form averaged cross sections are only available for bosons")]
    UnsupportedStatistics,

    #[error("numerical failure: {message} (error estimate {estimate:e})")]
    NumericalFailure { message: String, estimate: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// `line` is 1-based; 0 means the problem is not tied to one line.
    #[error("{}", config_message(*line, message))]
    Config { line: usize, message: String },

    #[error("csv row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_message(line: usize, message: &str) -> String {
    if line == 0 {
        format!("config: {message}")
    } else {
        format!("config line {line}: {message}")
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
