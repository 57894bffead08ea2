use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the CLI exit code they map to: configuration
/// problems (2), data problems (3) and numeric/training failures (4).
#[derive(Debug, Error)]
pub enum CricError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("unknown environment or pair: {0}")]
    Lookup(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("degenerate baseline: denominator {denominator:e} <= threshold {threshold:e}; CRIC is undefined")]
    DegenerateBaseline { denominator: f64, threshold: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("ratio classifier did not converge after {iterations} iterations (gradient inf-norm {grad_norm:e})")]
    FitNotConverged { iterations: usize, grad_norm: f64 },

    #[error("training diverged at iteration {iteration} (last finite loss {last_finite_loss:e})")]
    Diverged {
        iteration: usize,
        last_finite_loss: f64,
    },

    #[error("replicate {replicate}, method {method}: {source}")]
    InRun {
        replicate: usize,
        method: String,
        #[source]
        source: Box<CricError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CricError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            CricError::Config(_) | CricError::Json(_) => 2,
            CricError::Parse { .. }
            | CricError::Data(_)
            | CricError::Size(_)
            | CricError::Lookup(_)
            | CricError::Structural(_)
            | CricError::DegenerateBaseline { .. }
            | CricError::Io(_)
            | CricError::Csv(_) => 3,
            CricError::Numeric(_) | CricError::FitNotConverged { .. } | CricError::Diverged { .. } => 4,
            CricError::InRun { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CricError>;
