use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is out of its allowed range. `field` uses the CLI flag name.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("operation requires protocol {expected}, got {actual}")]
    WrongProtocol {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("count table did not converge below tail tolerance before k_max = {k_max}")]
    TruncationDidNotConverge { k_max: usize },

    #[error("outcome ({j}, {k}) lies outside the enumerated table (k_max = {k_max})")]
    OutcomeOutOfRange { j: usize, k: usize, k_max: usize },

    #[error("negative probability {p:e} at outcome ({j}, {k})")]
    NegativeProbability { j: usize, k: usize, p: f64 },

    #[error("hypothesis distributions are incompatible: {0}")]
    MismatchedHypotheses(String),

    #[error("log-likelihood spread is zero; the hypotheses cannot be separated by a log-normal model")]
    DegenerateSigma,

    #[error("hypotheses are indistinguishable: {0}")]
    Indistinguishable(String),

    #[error("confidence {target} not reachable below N = {limit:e}")]
    Unreachable { target: f64, limit: f64 },

    #[error("quadrature failed to converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("Fock truncation residual {residual:e} exceeds bound {bound:e}")]
    FockTruncation { residual: f64, bound: f64 },

    #[error("Fock index {index} out of range (dimension {dim})")]
    FockIndex { index: usize, dim: usize },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
