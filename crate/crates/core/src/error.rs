use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the codec can report.
///
/// The variants are grouped into coarse classes by [`Error::class`], which the
/// command-line tool maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Unsupported but well-formed input (e.g. an 8-bit WAV file).
    #[error("unsupported format: {0}")]
    Format(String),

    /// Malformed byte stream. `offset` is the byte position where decoding stopped.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A caller violated a documented precondition (shapes, lengths, rates).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("value out of range: {0}")]
    Range(String),

    /// Non-finite values in weights, latents or samples.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("weight resolution failed: {0}")]
    Resolution(String),

    #[error("filter design failed: {0}")]
    Design(String),

    #[error("fitting failed: {0}")]
    Fitting(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("streaming protocol error: {0}")]
    Protocol(String),

    /// An operation needs state that has not been provided (e.g. unfitted codebooks).
    #[error("{0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Coarse error classes. Stable numeric values are used as exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i32)]
pub enum ErrorClass {
    Io = 3,
    Parse = 4,
    Contract = 5,
    State = 6,
    Numeric = 7,
}

impl Error {
    pub fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) => ErrorClass::Io,
            Error::Format(_) | Error::Parse { .. } => ErrorClass::Parse,
            Error::Contract(_) | Error::Range(_) | Error::Config(_) | Error::Protocol(_) => {
                ErrorClass::Contract
            }
            Error::State(_) | Error::Resolution(_) => ErrorClass::State,
            Error::Validation(_)
            | Error::Design(_)
            | Error::Fitting(_)
            | Error::Metric(_) => ErrorClass::Numeric,
        }
    }
}
