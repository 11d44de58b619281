use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("distribution is not strictly positive: component {index} = {value}")]
    NotStrict { index: usize, value: f64 },

    #[error("emotion space mismatch")]
    SpaceMismatch,

    #[error("invalid emotion space: {0}")]
    InvalidSpace(String),

    #[error("unknown emotion trait `{0}`")]
    UnknownTrait(String),

    #[error("no activities given")]
    NoActivities,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid oracle supports at most 4 activities, got {0}")]
    OracleTooLarge(usize),

    #[error("utility mode mismatch: {0}")]
    UtilityMode(String),

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's configuration rather than the
    /// environment.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv(_))
    }
}
