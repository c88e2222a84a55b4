use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by how a caller should react: parameter problems
/// ([`Error::Validation`], [`Error::Config`], [`Error::Precondition`],
/// [`Error::InvalidSigma`], [`Error::Data`], [`Error::Domain`],
/// [`Error::Query`]) are fixable by changing inputs, numerical failures
/// ([`Error::Numerical`], [`Error::Model`], [`Error::Analysis`]) need a
/// different resolution, and [`Error::Assumption`] flags a model that falls
/// outside the theory (for example a failed Dalang condition).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid sigma (witness x = {witness:e}): {reason}")]
    InvalidSigma { witness: f64, reason: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("query error: {0}")]
    Query(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
}

impl Error {
    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Precondition(_) => "precondition",
            Error::InvalidSigma { .. } => "invalid-sigma",
            Error::Data(_) => "data",
            Error::Domain(_) => "domain",
            Error::Query(_) => "query",
            Error::Numerical(_) => "numerical",
            Error::Model(_) => "model",
            Error::Analysis(_) => "analysis",
            Error::Assumption(_) => "assumption",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
