use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("game construction failed: {0}")]
    Construction(String),

    #[error("matrix is numerically singular ({0})")]
    Singular(String),

    #[error("response solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// An incentive whose equilibrium response touches the boundary of the box,
    /// i.e. an incentive outside the interior response domain.
    #[error("incentive left the interior response domain: {0}")]
    LeftResponseDomain(String),

    #[error("learning rule `{rule}` is not supported by game `{game}`")]
    UnsupportedRule { rule: String, game: String },

    #[error("rejection sampling acceptance rate {rate:.2e} is below 1e-4; increase c_fraction")]
    SamplingRate { rate: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
