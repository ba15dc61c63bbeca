use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: missing required column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },

    #[error("{}: duplicate {what} `{key}`", path.display())]
    Duplicate {
        path: PathBuf,
        what: &'static str,
        key: String,
    },

    #[error("codebook: {0}")]
    Codebook(String),

    #[error("patient {patient}: {detail}")]
    Geography { patient: String, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "regression is under-identified: {observations} observations for {parameters} parameters"
    )]
    UnderIdentified {
        observations: usize,
        parameters: usize,
    },

    #[error("similarity is undefined: every skewer produced a zero response")]
    UndefinedSimilarity,

    #[error("matrix dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Coarse classification used to pick a process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Infeasible,
    Internal,
}

impl ErrorKind {
    /// 2 for bad input or configuration, 3 for statistically infeasible
    /// requests, 1 for anything else.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Input => 2,
            ErrorKind::Infeasible => 3,
            ErrorKind::Internal => 1,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::MissingColumn { .. }
            | Error::Duplicate { .. }
            | Error::Codebook(_)
            | Error::Geography { .. }
            | Error::Config(_) => ErrorKind::Input,
            Error::UnderIdentified { .. } | Error::UndefinedSimilarity => ErrorKind::Infeasible,
            Error::DimensionMismatch { .. } => ErrorKind::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
