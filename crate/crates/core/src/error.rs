use std::fmt;
use std::io;
use std::path::PathBuf;

use crate::model::{CodeUnitRef, EntryId};

/// Why an elementary change could not be applied to a codebase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConflictKind {
    AlreadyExists,
    Missing,
    /// The event's `before` snapshot differs from the current definition.
    StaleBefore,
    /// A container still holds units and cannot be removed.
    NotEmpty,
    /// The event itself is inconsistent (e.g. a modification that changes identity).
    Malformed,
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictKind::AlreadyExists => "AlreadyExists",
            ConflictKind::Missing => "Missing",
            ConflictKind::StaleBefore => "StaleBefore",
            ConflictKind::NotEmpty => "NotEmpty",
            ConflictKind::Malformed => "Malformed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub unit: CodeUnitRef,
}

impl Conflict {
    pub fn new(kind: ConflictKind, unit: CodeUnitRef) -> Self {
        Conflict { kind, unit }
    }
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Conflict({}) on {}", self.kind, self.unit)
    }
}

impl std::error::Error for Conflict {}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Conflict(#[from] Conflict),
    #[error("{kind} events cannot be inverted")]
    NotInvertible { kind: &'static str },
    #[error("entry {entry} cannot be undone: {reason}")]
    NotUndoable { entry: EntryId, reason: String },
    #[error("unknown entry {0}")]
    UnknownEntry(EntryId),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("log {path} is locked by another writer")]
    Locked { path: PathBuf },
    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unsupported format header {found:?} (expected {expected:?})")]
    Version { expected: String, found: String },
    #[error("storage failure: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Domain errors are the user's business; everything else is infrastructure.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Conflict(_)
                | Error::NotInvertible { .. }
                | Error::NotUndoable { .. }
                | Error::UnknownEntry(_)
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
