use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid response for {family} family at row {row}: {value}")]
    InvalidResponse {
        family: &'static str,
        row: usize,
        value: f64,
    },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("sampling failed after {attempts} attempts: {reason}")]
    Resampling { attempts: usize, reason: String },

    #[error("predictor has not been fitted")]
    NotFitted,

    #[error("too many failed replications: {failures} of {reps} (last error: {last})")]
    FailureCap {
        failures: usize,
        reps: usize,
        last: String,
    },

    #[error("unknown scenario '{name}'; available: {available}")]
    UnknownScenario { name: String, available: String },

    #[error("report I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("report parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GrpError>;
