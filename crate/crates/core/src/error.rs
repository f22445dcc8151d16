use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown unit tag `{0}`")]
    UnknownUnit(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("timestep {k} out of range for a schedule of {len} steps")]
    StepOutOfRange { k: usize, len: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate well: ln(r_e/r_w) + s = {0} must be positive")]
    DegenerateWell(f64),

    #[error("cell ({i}, {j}) hosts more than one well")]
    DuplicateWellCell { i: usize, j: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        /// Snapshots accepted before the failing step.
        partial: Box<crate::trajectory::Trajectory>,
        #[source]
        source: Box<Error>,
    },

    #[error("relative error undefined: reference value {value} at index {index} is not positive")]
    NonPositiveReference { index: usize, value: f64 },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("malformed array file: {0}")]
    Format(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}
