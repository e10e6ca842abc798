use thiserror::Error;

/// Errors raised by the numerical core. Numeric payloads are reported as
/// `f64` regardless of the scalar type used for the computation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("value {value} outside attainable range [{lo}, {hi}]{}", context_suffix(.context))]
    OutOfRange {
        value: f64,
        lo: f64,
        hi: f64,
        context: String,
    },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("empty fit window: {0}")]
    EmptyWindow(String),

    #[error("invalid damping law at s = {witness}: {reason}")]
    InvalidDamping { witness: f64, reason: String },

    #[error("hypothesis unmet: {0}")]
    HypothesisUnmet(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn range(value: f64, lo: f64, hi: f64) -> Self {
        Error::OutOfRange {
            value,
            lo,
            hi,
            context: String::new(),
        }
    }

    /// Attaches a human-readable location to a range error; other variants
    /// pass through unchanged.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::OutOfRange {
                value, lo, hi, context,
            } => {
                let ctx = ctx.into();
                let context = if context.is_empty() {
                    ctx
                } else {
                    format!("{ctx}; {context}")
                };
                Error::OutOfRange {
                    value,
                    lo,
                    hi,
                    context,
                }
            }
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
