use thiserror::Error;

/// Errors raised by the coding, decoding and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid generator polynomial {poly:#o}: {reason}")]
    InvalidPolynomial { poly: u32, reason: String },

    #[error("cannot parse octal polynomial {0:?}")]
    PolynomialParse(String),

    #[error("tail-biting encoding needs at least {memory} message bits, got {len}")]
    MessageTooShort { len: usize, memory: usize },

    #[error("llr vector of length {len} does not match a {mode} codeword")]
    LlrLength { len: usize, mode: &'static str },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid channel: {0}")]
    Channel(String),

    #[error("invalid crc polynomial: {0}")]
    Crc(String),

    #[error("exhaustive decoding is limited to {max} message bits, got {k}")]
    EnumerationGuard { k: usize, max: usize },

    #[error("latency diverges: retransmission probability at the final decode point is {0}")]
    Divergent(f64),

    #[error("bound hypothesis violated: {0}")]
    BoundHypothesis(String),

    #[error("infeasible length constraints: {0}")]
    Infeasible(String),

    #[error("degenerate retransmission model: {0}")]
    DegenerateModel(String),

    #[error("code and schedule are inconsistent: {0}")]
    Mismatch(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
