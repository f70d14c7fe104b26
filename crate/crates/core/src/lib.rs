//! A semantic, crash-durable change log for a class-based codebase.
//!
//! Every edit to packages, classes and methods is recorded as an event in an
//! append-only log. The codebase is always the replay of the log's main line,
//! and history can be undone, redone, condensed, split onto side branches,
//! recovered after a crash, and shared between logs.

pub mod cli;
pub mod codebase;
pub mod engine;
pub mod error;
pub mod log;
pub mod model;
pub mod views;

pub use codebase::{invert, Codebase};
pub use engine::{replay_main_line, ImportMode, ReplayOutcome, ReplayReport, ReplayStatus, Workspace};
pub use error::{Conflict, ConflictKind, Error, Result};
pub use log::{Clock, Entry, EntryFilter, Log, TagAttachment, TruncationReport};
pub use model::{
    ClassDef, CodeUnitRef, Definition, EntryId, Event, MethodDef, PackageDef, Tag, TagKey,
    TagValue, Tags, UnitKind,
};
pub use views::{build_view, effective_history, View, ViewBuilder, ViewNode};
