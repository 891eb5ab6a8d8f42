use std::path::PathBuf;

use crate::model::Violation;
use crate::solver::Status;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("EV {ev_id} is infeasible: {}", format_violations(.violations))]
    InfeasibleSpec { ev_id: String, violations: Vec<Violation> },

    #[error("solver returned {status:?} while solving {context}")]
    Solver { context: String, status: Status },

    #[error("schedules cover different time grids ({expected} vs {found} steps)")]
    MixedGrids { expected: usize, found: usize },

    #[error("unknown bus {0}")]
    UnknownBus(u32),

    #[error("branch has zero impedance")]
    ZeroImpedance,

    #[error("reduced susceptance matrix is singular")]
    SingularSystem,

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{}: schema_version {found} is not supported (expected {expected})", path.display())]
    SchemaVersion { path: PathBuf, found: u32, expected: u32 },

    #[error("ledger mismatch: {0}")]
    LedgerMismatch(String),

    #[error("unknown sweep parameter {0:?}")]
    UnknownParameter(String),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
