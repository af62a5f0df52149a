use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants fall into three classes (see [`Error::class`]) which the
/// command-line front end maps onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cell index out of range: {0}")]
    CellIndexOutOfRange(String),
    #[error("duplicate label: {0}")]
    DuplicateLabel(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} is too large for exhaustive enumeration")]
    TooLarge(String),
    #[error("field is not equivariant: {0}")]
    NotEquivariant(String),
    #[error("origin is not an equilibrium: {0}")]
    NotEquilibrium(String),
    #[error("degenerate draw: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error taxonomy used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Degenerate,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse(_)
            | Error::CellIndexOutOfRange(_)
            | Error::DuplicateLabel(_)
            | Error::Dimension(_)
            | Error::TooLarge(_)
            | Error::Io(_) => ErrorClass::Input,
            Error::Degenerate(_) | Error::NotEquilibrium(_) => ErrorClass::Degenerate,
            Error::NotEquivariant(_) | Error::Numerical(_) | Error::Internal(_) => {
                ErrorClass::Numerical
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
