use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand dimensions do not line up.
    Shape(String),
    /// A NaN or infinity reached a public operation.
    Numeric(String),
    /// An operation was called in the wrong order (e.g. backward without a tape).
    State(String),
    /// Invalid hyperparameter or dataset description.
    Config(String),
    /// Argument outside the mathematical domain of a formula.
    Domain(String),
    /// A batch with zero rows where at least one is required.
    EmptyBatch,
    /// Two networks (or a network and a prototype bank) disagree on layout.
    Architecture(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::EmptyBatch => f.write_str("empty batch"),
            Error::Architecture(m) => write!(f, "architecture error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(alloc::format!($($arg)*)) };
}

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}

pub(crate) use config_err;
pub(crate) use shape_err;
