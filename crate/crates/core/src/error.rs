use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not conform for the named primitive.
    Shape {
        op: &'static str,
        left: alloc::vec::Vec<usize>,
        right: alloc::vec::Vec<usize>,
    },
    /// A NaN or infinity appeared in a value or gradient.
    NonFinite { context: String },
    /// Input rejected by an operation's precondition.
    Invalid(String),
    /// An error raised while training, with where it happened.
    Training {
        episode: usize,
        step: usize,
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.into(),
            right: right.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => {
                write!(f, "shape mismatch in {op}: {left:?} vs {right:?}")
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::Invalid(msg) => f.write_str(msg),
            Error::Training {
                episode,
                step,
                source,
            } => write!(f, "training failed at episode {episode}, step {step}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Training { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
