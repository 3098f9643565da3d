use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A sink was asked to hold more audio than its buffer allows.
    #[error("buffer exceeded: requested {requested_ms} ms, sink supports {capacity_ms} ms")]
    BufferExceeded { requested_ms: f64, capacity_ms: f64 },

    /// The active rule set has no such parameter (e.g. local alignment delay under strict rules).
    #[error("parameter unsupported: {0}")]
    ParameterUnsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable kebab-case name used in reports and CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NotFound(_) => "not-found",
            Error::OutOfRange(_) => "out-of-range",
            Error::BufferExceeded { .. } => "buffer-exceeded",
            Error::ParameterUnsupported(_) => "parameter-unsupported",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
