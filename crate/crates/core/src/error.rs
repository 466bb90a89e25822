use std::path::PathBuf;

/// Errors raised by the optimizer, its evaluators and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular Fisher information matrix (|det F| = {det:.3e}, threshold {threshold:.3e})")]
    SingularFim { det: f64, threshold: f64 },

    #[error("harvesting threshold {e_min:.6e} W is unreachable (saturation {max_power:.6e} W)")]
    ThresholdUnreachable { e_min: f64, max_power: f64 },

    #[error("precoder has zero Frobenius norm")]
    ZeroPrecoder,

    #[error("no feasible sample found within a budget of {0} draws")]
    NoFeasibleSample(usize),

    #[error("non-finite function value while differentiating coordinate {0}")]
    NonFiniteEvaluation(usize),

    #[error("invalid sweep specification: {0}")]
    InvalidSweep(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag, used by the CLI error line and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::SingularFim { .. } => "singular_fim",
            Error::ThresholdUnreachable { .. } => "threshold_unreachable",
            Error::ZeroPrecoder => "zero_precoder",
            Error::NoFeasibleSample(_) => "no_feasible_sample",
            Error::NonFiniteEvaluation(_) => "non_finite_evaluation",
            Error::InvalidSweep(_) => "invalid_sweep",
            Error::Parse(_) => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
