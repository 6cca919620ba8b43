use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A truncation interval with (numerically) zero normal mass.
    #[error("degenerate interval [{lower}, {upper}]: normal mass below 1e-300")]
    DegenerateInterval { lower: f64, upper: f64 },

    /// A parameter outside its admissible region.
    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("unsupported correlation structure: {0}")]
    UnsupportedStructure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::UnsupportedStructure(_) => 2,
            Error::Data { .. } => 3,
            Error::Domain(_)
            | Error::DegenerateInterval { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
