//! Error taxonomy shared by the library and the CLI.
//!
//! Three categories, mapped one-to-one onto CLI exit codes: bad input (1),
//! a violated structural invariant (2), and a quantitative hypothesis that
//! failed on the data (3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-domain input: unknown point ids, nonpositive
    /// radii, unparseable space specs, missing files.
    #[error("input error: {0}")]
    Input(String),

    /// A structural invariant that the build promised to verify does not
    /// hold (broken partition, separation failure, invalid witness).
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A quantitative hypothesis needed by a downstream bound failed on the
    /// data (e.g. a doubling check found a violating cube pair).
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis(msg.into())
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 1,
            Error::Invariant(_) => 2,
            Error::Hypothesis(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
