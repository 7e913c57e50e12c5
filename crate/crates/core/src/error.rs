use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical model parameter violates its invariants.
    #[error("invalid model parameter: {0}")]
    ModelParameter(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The finite-difference step is too coarse to serve as an oracle.
    #[error("oracle accuracy: {0}")]
    OracleAccuracy(String),

    #[error("fit failed: {0}")]
    Fit(String),

    /// A count bin carries no usable contrast after dark subtraction.
    #[error("degenerate bin: {0}")]
    DegenerateBin(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("malformed data in {context}: {message}")]
    Data { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            context: context.into(),
            message: message.into(),
        }
    }
}
