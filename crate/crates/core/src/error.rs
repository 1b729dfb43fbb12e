use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("empty week")]
    EmptyWeek,
    #[error("inconsistent grouping: {0}")]
    InconsistentGrouping(String),
    #[error("insufficient history: {got} daily values, need at least {need}")]
    InsufficientHistory { got: usize, need: usize },
    #[error("empty population for county {0}")]
    EmptyPopulation(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("constant column `{0}`")]
    ConstantColumn(String),
    #[error("missing covariate `{0}`")]
    MissingCovariate(String),
    #[error("column mismatch: expected `{expected}`, found `{found}`")]
    ColumnMismatch { expected: String, found: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("undefined R²: target has zero variance")]
    UndefinedR2,

    #[error("qubit count {0} outside 1..=24")]
    QubitCount(usize),
    #[error("wire {wire} out of range for {n_qubits} qubits")]
    WireOutOfRange { wire: usize, n_qubits: usize },
    #[error("control and target are both wire {0}")]
    SameWires(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
