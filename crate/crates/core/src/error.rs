use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field degree {0} out of range (supported: 1..=12)")]
    DegreeOutOfRange(u32),

    #[error("polynomial {poly:#x} does not have degree {degree}")]
    WrongDegree { poly: u32, degree: u32 },

    #[error("polynomial {poly:#x} is not primitive over GF(2) (x has order {order}, need {expected})")]
    NotPrimitive { poly: u32, order: usize, expected: usize },

    #[error("zero has no multiplicative inverse")]
    ZeroInverse,

    #[error("element {element} is outside GF(2^{degree})")]
    ElementOutOfRange { element: u32, degree: u32 },

    #[error("spreading vector entry {index} is zero")]
    ZeroSpreadingElement { index: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exact enumeration needs {needed} joint realizations, over the budget of {budget}; use Monte-Carlo mode")]
    EnumerationBudget { needed: String, budget: u64 },

    #[error("slope fit needs at least 2 points inside the BER window, found {0}")]
    TooFewPoints(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
