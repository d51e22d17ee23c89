use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    InvalidInput(String),
    /// Two inputs that must agree in shape do not.
    ShapeMismatch { expected: usize, found: usize },
    /// More topics were requested than there are tokens to assign.
    TooFewTokens { topics: usize, tokens: usize },
    /// A group-by attribute name that documents do not carry.
    UnknownAttribute(String),
    /// A document has no value for the attribute being grouped on.
    MissingAttribute { doc_id: String, attribute: &'static str },
    /// The series has no positive counts, so no growth rate exists.
    Unfittable { topic_id: u32 },
    /// Reduced chi-squared values are all (near) zero; no mode to calibrate.
    DegenerateCalibration,
    /// Outlier rejection removed every value.
    AllExcluded,
    /// Two-point CAGR with a zero starting count.
    ZeroBaseline,
    Empty(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected}, found {found}")
            }
            Error::TooFewTokens { topics, tokens } => {
                write!(f, "{topics} topics requested but corpus has only {tokens} tokens")
            }
            Error::UnknownAttribute(name) => write!(f, "unknown document attribute `{name}`"),
            Error::MissingAttribute { doc_id, attribute } => {
                write!(f, "document {doc_id} has no value for `{attribute}`")
            }
            Error::Unfittable { topic_id } => {
                write!(f, "topic {topic_id} has no positive counts and cannot be fitted")
            }
            Error::DegenerateCalibration => {
                f.write_str("all reduced chi-squared values are zero; calibration aborted")
            }
            Error::AllExcluded => f.write_str("outlier rejection excluded every value"),
            Error::ZeroBaseline => f.write_str("two-point CAGR is undefined for a zero initial count"),
            Error::Empty(what) => write!(f, "{what} is empty"),
        }
    }
}

impl core::error::Error for Error {}
