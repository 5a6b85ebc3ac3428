use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Fisher information is rank deficient: {parameter} is unidentifiable")]
    RankDeficient { parameter: &'static str },

    #[error("angle CRB is singular at azimuth {azimuth} rad (cos = 0)")]
    SingularAngle { azimuth: f64 },

    #[error("zero range to AP {ap}: measurement Jacobian is singular")]
    ZeroRange { ap: usize },

    #[error("no sensing receivers selected")]
    EmptySelection,

    #[error("innovation covariance is singular at epoch {epoch} (selection bitmask {selection:#b})")]
    SingularInnovation { epoch: u64, selection: u64 },

    #[error("no feasible AP subset: cardinality {cardinality} with {available} eligible APs")]
    InfeasibleSelection { cardinality: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// True for errors caused by the user's configuration rather than the run.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig { .. } | Error::ConfigParse { .. })
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
