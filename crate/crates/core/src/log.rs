//! Append-only, immediately durable, truncation-tolerant entry log.
//!
//! On disk a log is a UTF-8 text file: a header line `omlog 1` followed by
//! one JSON object per line. Entry records carry
//! `{recordType, id, parent, eventKind, payload, tags}`; tag attachments
//! reuse the same shape with `recordType: "tag"`, `id` naming the target
//! entry and `tags` holding the attached tag. Every record is fsynced
//! before `append`/`attach_tag` return, so after a crash only a record
//! whose append never returned can be missing, and it shows up as an
//! unterminated final line.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CodeUnitRef, EntryId, Event, Tag, TagKey, Tags};

pub const LOG_HEADER: &str = "omlog 1";
pub const EXPORT_HEADER: &str = "omlog-export 1";
pub const LOG_EXTENSION: &str = "omlog";

/// Source of entry timestamps.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn parse_fixed(text: &str) -> Result<Clock> {
        let at = DateTime::parse_from_rfc3339(text)
            .map_err(|e| Error::InvalidArgument(format!("bad timestamp {text:?}: {e}")))?;
        Ok(Clock::Fixed(at.with_timezone(&Utc)))
    }

    /// ISO-8601 UTC instant, second precision.
    pub fn now(&self) -> String {
        let at = match self {
            Clock::System => Utc::now(),
            Clock::Fixed(at) => *at,
        };
        at.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub id: EntryId,
    pub parent: Option<EntryId>,
    pub event: Event,
    pub tags: Tags,
}

impl Entry {
    pub fn triggered_by(&self) -> Option<&EntryId> {
        self.tags.entry(TagKey::TriggeredBy)
    }

    pub fn redone_from(&self) -> Option<&EntryId> {
        self.tags.entry(TagKey::RedoneFrom)
    }

    pub fn refactoring_of(&self) -> Option<&EntryId> {
        self.tags.entry(TagKey::RefactoringOf)
    }

    /// The composite entry this one was caused by, if any.
    pub fn cause(&self) -> Option<&EntryId> {
        self.triggered_by().or_else(|| self.refactoring_of())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagAttachment {
    pub target: EntryId,
    pub tag: Tag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    Entry(EntryId),
    Tag(TagAttachment),
}

/// Describes an unterminated tail dropped while loading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationReport {
    /// Length of the record-aligned prefix that was kept.
    pub valid_len: u64,
    pub dropped_bytes: u64,
}

/// Selects entries for listings and exports.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntryFilter {
    pub unit: Option<CodeUnitRef>,
    pub from: Option<u64>,
    pub to: Option<u64>,
    pub kind: Option<String>,
    pub tag: Option<TagKey>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawRecord {
    record_type: String,
    id: EntryId,
    #[serde(default)]
    parent: Option<EntryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload: Option<serde_json::Value>,
    tags: Tags,
}

const ENTRY_RECORD: &str = "entry";
const TAG_RECORD: &str = "tag";

fn encode_entry(entry: &Entry) -> String {
    let mut value = serde_json::to_value(&entry.event).expect("events serialize");
    let object = value.as_object_mut().expect("adjacently tagged");
    let event_kind = object
        .remove("eventKind")
        .and_then(|v| v.as_str().map(str::to_string));
    let raw = RawRecord {
        record_type: ENTRY_RECORD.to_string(),
        id: entry.id.clone(),
        parent: entry.parent.clone(),
        event_kind,
        payload: object.remove("payload"),
        tags: entry.tags.clone(),
    };
    serde_json::to_string(&raw).expect("records serialize")
}

fn encode_attachment(attachment: &TagAttachment) -> String {
    let raw = RawRecord {
        record_type: TAG_RECORD.to_string(),
        id: attachment.target.clone(),
        parent: None,
        event_kind: None,
        payload: None,
        tags: [attachment.tag.clone()].into_iter().collect(),
    };
    serde_json::to_string(&raw).expect("records serialize")
}

enum Decoded {
    Entry(Entry),
    Tag(Vec<TagAttachment>),
}

fn decode(line: &str) -> std::result::Result<Decoded, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    match raw.record_type.as_str() {
        ENTRY_RECORD => {
            let kind = raw.event_kind.ok_or("entry record without eventKind")?;
            let mut object = serde_json::Map::new();
            object.insert("eventKind".into(), serde_json::Value::String(kind));
            if let Some(payload) = raw.payload {
                object.insert("payload".into(), payload);
            }
            let event: Event =
                serde_json::from_value(serde_json::Value::Object(object)).map_err(|e| e.to_string())?;
            Ok(Decoded::Entry(Entry {
                id: raw.id,
                parent: raw.parent,
                event,
                tags: raw.tags,
            }))
        }
        TAG_RECORD => Ok(Decoded::Tag(
            raw.tags
                .iter()
                .map(|tag| TagAttachment {
                    target: raw.id.clone(),
                    tag,
                })
                .collect(),
        )),
        other => Err(format!("unknown recordType {other:?}")),
    }
}

/// Complete lines of `bytes` after the header, plus the truncation report
/// for an unterminated tail. `None` lines means the header itself was absent.
fn split_records<'a>(
    bytes: &'a [u8],
    header: &str,
) -> Result<(Option<Vec<(usize, &'a str)>>, Option<TruncationReport>)> {
    let complete_len = match bytes.iter().rposition(|b| *b == b'\n') {
        Some(pos) => pos + 1,
        None => 0,
    };
    let report = (complete_len < bytes.len()).then(|| TruncationReport {
        valid_len: complete_len as u64,
        dropped_bytes: (bytes.len() - complete_len) as u64,
    });
    if complete_len == 0 {
        return Ok((None, report));
    }
    let text = std::str::from_utf8(&bytes[..complete_len]).map_err(|e| Error::Corrupt {
        line: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut lines = text.split_terminator('\n');
    let first = lines.next().unwrap_or_default();
    if first != header {
        return Err(Error::Version {
            expected: header.to_string(),
            found: first.to_string(),
        });
    }
    Ok((Some(lines.enumerate().map(|(i, l)| (i + 2, l)).collect()), report))
}

enum Backend {
    File { file: File, path: PathBuf },
    Memory(Vec<u8>),
    ReadOnly { path: PathBuf },
}

/// An open log: entries, tag attachments, head, and the backing store.
pub struct Log {
    name: String,
    backend: Backend,
    entries: Vec<Entry>,
    index: HashMap<u64, usize>,
    records: Vec<Record>,
    head: Option<EntryId>,
    side: HashSet<u64>,
    author: String,
    clock: Clock,
}

impl std::fmt::Debug for Log {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Log")
            .field("name", &self.name)
            .field("entries", &self.entries.len())
            .field("head", &self.head)
            .finish()
    }
}

fn log_name_for(path: &Path) -> Result<String> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad log path {}", path.display())))?;
    check_log_name(stem)?;
    Ok(stem.to_string())
}

fn check_log_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(|c: char| c == ':' || c.is_whitespace()) {
        return Err(Error::InvalidArgument(format!("bad log name {name:?}")));
    }
    Ok(())
}

fn default_author() -> String {
    std::env::var("USER")
        .ok()
        .filter(|u| !u.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

impl Log {
    fn empty(name: String, backend: Backend) -> Log {
        Log {
            name,
            backend,
            entries: Vec::new(),
            index: HashMap::new(),
            records: Vec::new(),
            head: None,
            side: HashSet::new(),
            author: default_author(),
            clock: Clock::System,
        }
    }

    /// A log kept entirely in memory; useful for tests and simulations.
    pub fn in_memory(name: &str) -> Result<Log> {
        check_log_name(name)?;
        let mut bytes = Vec::new();
        writeln!(bytes, "{LOG_HEADER}")?;
        Ok(Log::empty(name.to_string(), Backend::Memory(bytes)))
    }

    /// An in-memory copy of the entries, for trying out appends.
    pub(crate) fn scratch_copy(&self) -> Log {
        Log {
            name: self.name.clone(),
            backend: Backend::Memory(Vec::new()),
            entries: self.entries.clone(),
            index: self.index.clone(),
            records: self.records.clone(),
            head: self.head.clone(),
            side: self.side.clone(),
            author: self.author.clone(),
            clock: self.clock.clone(),
        }
    }

    /// Reads a log without taking the writer lock. The result cannot be appended to.
    pub fn load(path: &Path) -> Result<(Log, Option<TruncationReport>)> {
        let bytes = fs::read(path)?;
        let mut log = Log::empty(log_name_for(path)?, Backend::ReadOnly {
            path: path.to_path_buf(),
        });
        let report = log.replay_bytes(&bytes)?;
        Ok((log, report))
    }

    /// Opens (creating if absent) a log for writing. Holds an exclusive
    /// advisory lock until dropped. A torn final record is cut off so the
    /// file is immediately appendable.
    pub fn open(path: &Path) -> Result<(Log, Option<TruncationReport>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        if file.try_lock().is_err() {
            return Err(Error::Locked {
                path: path.to_path_buf(),
            });
        }
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut log = Log::empty(log_name_for(path)?, Backend::File {
            file,
            path: path.to_path_buf(),
        });
        let report = log.replay_bytes(&bytes)?;
        let kept = report.as_ref().map_or(bytes.len() as u64, |r| r.valid_len);
        if let Backend::File { file, .. } = &mut log.backend {
            if report.is_some() {
                file.set_len(kept)?;
            }
            if kept == 0 {
                file.write_all(format!("{LOG_HEADER}\n").as_bytes())?;
            }
            file.sync_all()?;
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            // Make the file's directory entry durable too.
            if let Ok(dir) = File::open(dir) {
                let _ = dir.sync_all();
            }
        }
        Ok((log, report))
    }

    fn replay_bytes(&mut self, bytes: &[u8]) -> Result<Option<TruncationReport>> {
        let (lines, report) = split_records(bytes, LOG_HEADER)?;
        let mut named = false;
        for (line_no, line) in lines.unwrap_or_default() {
            let corrupt = |message: String| Error::Corrupt {
                line: line_no,
                message,
            };
            match decode(line).map_err(corrupt)? {
                Decoded::Entry(entry) => {
                    if !named {
                        // Ids carry the name the log was written under.
                        self.name = entry.id.log.clone();
                        named = true;
                    }
                    self.check_structure(&entry).map_err(corrupt)?;
                    self.push_entry(entry);
                }
                Decoded::Tag(attachments) => {
                    for attachment in attachments {
                        if !self.contains(&attachment.target) {
                            return Err(corrupt(format!(
                                "tag attached to unknown entry {}",
                                attachment.target
                            )));
                        }
                        self.push_attachment(attachment);
                    }
                }
            }
        }
        Ok(report)
    }

    fn check_structure(&self, entry: &Entry) -> std::result::Result<(), String> {
        let expected = self.next_id();
        if entry.id != expected {
            return Err(format!("expected id {expected}, found {}", entry.id));
        }
        match &entry.parent {
            None if !self.entries.is_empty() => Err("only the first entry may lack a parent".into()),
            Some(parent) if !self.contains(parent) => Err(format!("unknown parent {parent}")),
            _ => Ok(()),
        }
    }

    fn push_entry(&mut self, entry: Entry) {
        let seq = entry.id.seq;
        if entry.tags.contains(TagKey::BranchLabel) {
            self.side.insert(seq);
        } else {
            self.head = Some(entry.id.clone());
        }
        self.index.insert(seq, self.entries.len());
        self.records.push(Record::Entry(entry.id.clone()));
        self.entries.push(entry);
    }

    fn push_attachment(&mut self, attachment: TagAttachment) {
        let idx = self.index[&attachment.target.seq];
        self.entries[idx].tags.insert(attachment.tag.clone());
        self.records.push(Record::Tag(attachment));
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(line.len() + 1);
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
        match &mut self.backend {
            Backend::Memory(buffer) => {
                buffer.extend_from_slice(&bytes);
                Ok(())
            }
            Backend::File { file, .. } => {
                let before = file.metadata()?.len();
                let result = file.write_all(&bytes).and_then(|_| file.sync_data());
                if result.is_err() {
                    // Best effort: keep the file record-aligned.
                    let _ = file.set_len(before);
                }
                result.map_err(Error::from)
            }
            Backend::ReadOnly { path } => Err(Error::InvalidArgument(format!(
                "log {} was opened read-only",
                path.display()
            ))),
        }
    }

    pub fn set_author(&mut self, author: impl Into<String>) -> Result<()> {
        let author = author.into();
        if author.is_empty() {
            return Err(Error::InvalidArgument("author must not be empty".into()));
        }
        self.author = author;
        Ok(())
    }

    pub fn set_clock(&mut self, clock: Clock) {
        self.clock = clock;
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn author(&self) -> &str {
        &self.author
    }

    /// Appends an event. The parent is `parent` when given, else the head.
    /// Entries tagged `branchLabel` are side-branch entries and leave the
    /// head where it is; all others become the new head.
    pub fn append(
        &mut self,
        event: Event,
        extra_tags: impl IntoIterator<Item = Tag>,
        parent: Option<EntryId>,
    ) -> Result<&Entry> {
        if let Some(parent) = &parent {
            if !self.contains(parent) {
                return Err(Error::UnknownEntry(parent.clone()));
            }
        }
        let mut tags = Tags::new();
        tags.insert(Tag::text(TagKey::Author, self.author.clone()));
        tags.insert(Tag::text(TagKey::Timestamp, self.clock.now()));
        for tag in extra_tags {
            if matches!(tag.key, TagKey::Author | TagKey::Timestamp) {
                continue;
            }
            if matches!(tag.key, TagKey::TriggeredBy | TagKey::RefactoringOf) {
                let target = tag.value.as_entry().expect("entry-valued key");
                if !self.contains(target) {
                    return Err(Error::UnknownEntry(target.clone()));
                }
            }
            tags.insert(tag);
        }
        let entry = Entry {
            id: self.next_id(),
            parent: parent.or_else(|| self.head.clone()),
            event,
            tags,
        };
        self.write_line(&encode_entry(&entry))?;
        self.push_entry(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Attaches a tag to an already persisted entry.
    pub fn attach_tag(&mut self, target: &EntryId, tag: Tag) -> Result<TagAttachment> {
        if !self.contains(target) {
            return Err(Error::UnknownEntry(target.clone()));
        }
        let attachment = TagAttachment {
            target: target.clone(),
            tag,
        };
        self.write_line(&encode_attachment(&attachment))?;
        self.push_attachment(attachment.clone());
        Ok(attachment)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::File { path, .. } | Backend::ReadOnly { path } => Some(path),
            Backend::Memory(_) => None,
        }
    }

    /// Raw bytes of an in-memory log.
    pub fn memory_bytes(&self) -> Option<&[u8]> {
        match &self.backend {
            Backend::Memory(bytes) => Some(bytes),
            _ => None,
        }
    }

    pub fn head(&self) -> Option<&EntryId> {
        self.head.as_ref()
    }

    pub fn next_id(&self) -> EntryId {
        EntryId::new(self.name.clone(), self.entries.len() as u64 + 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn contains(&self, id: &EntryId) -> bool {
        id.log == self.name && self.index.contains_key(&id.seq)
    }

    pub fn entry(&self, id: &EntryId) -> Option<&Entry> {
        if id.log != self.name {
            return None;
        }
        self.index.get(&id.seq).map(|&i| &self.entries[i])
    }

    pub fn require(&self, id: &EntryId) -> Result<&Entry> {
        self.entry(id).ok_or_else(|| Error::UnknownEntry(id.clone()))
    }

    /// True for entries placed on a named side branch.
    pub fn is_side_branch(&self, id: &EntryId) -> bool {
        id.log == self.name && self.side.contains(&id.seq)
    }

    /// Entries in append order that are not on side branches.
    pub fn main_line(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| !self.side.contains(&e.id.seq))
    }

    /// Entries directly caused by `id`, in append order.
    pub fn children_of<'a>(&'a self, id: &'a EntryId) -> impl Iterator<Item = &'a Entry> + 'a {
        let start = self.index.get(&id.seq).map_or(self.entries.len(), |i| i + 1);
        self.entries[start..]
            .iter()
            .filter(move |e| e.cause() == Some(id))
    }

    /// Units an entry touches; undo, redo and split entries resolve their targets.
    pub fn affected_units(&self, entry: &Entry) -> Vec<CodeUnitRef> {
        match &entry.event {
            Event::Undo { target } | Event::Redo { target } => self
                .entry(target)
                .map(|e| e.event.affected_units())
                .unwrap_or_default(),
            Event::Split { targets, .. } => {
                let mut out = Vec::new();
                for target in targets {
                    for unit in self
                        .entry(target)
                        .map(|e| e.event.affected_units())
                        .unwrap_or_default()
                    {
                        if !out.contains(&unit) {
                            out.push(unit);
                        }
                    }
                }
                out
            }
            event => event.affected_units(),
        }
    }

    /// Entries appended after the most recent session or version save, or
    /// after the first session start when nothing was ever saved.
    pub fn entries_after_last_save(&self) -> &[Entry] {
        let last_save = self.entries.iter().rposition(|e| {
            matches!(e.event, Event::SessionSave { .. } | Event::SaveVersion { .. })
        });
        let start = match last_save {
            Some(i) => i + 1,
            None => self
                .entries
                .iter()
                .position(|e| matches!(e.event, Event::SessionStart { .. }))
                .map_or(0, |i| i + 1),
        };
        &self.entries[start..]
    }

    pub fn query(&self, filter: &EntryFilter) -> Vec<&Entry> {
        self.entries
            .iter()
            .filter(|e| filter.from.is_none_or(|from| e.id.seq >= from))
            .filter(|e| filter.to.is_none_or(|to| e.id.seq <= to))
            .filter(|e| filter.kind.as_deref().is_none_or(|k| e.event.kind().eq_ignore_ascii_case(k)))
            .filter(|e| filter.tag.is_none_or(|t| e.tags.contains(t)))
            .filter(|e| {
                filter
                    .unit
                    .as_ref()
                    .is_none_or(|u| self.affected_units(e).contains(u))
            })
            .collect()
    }
}

/// Writes entries (with their current tags and original ids) as an export file.
pub fn write_export<'a>(path: &Path, entries: impl IntoIterator<Item = &'a Entry>) -> Result<usize> {
    let mut text = format!("{EXPORT_HEADER}\n");
    let mut count = 0;
    for entry in entries {
        text.push_str(&encode_entry(entry));
        text.push('\n');
        count += 1;
    }
    let mut file = File::create(path)?;
    file.write_all(text.as_bytes())?;
    file.sync_all()?;
    Ok(count)
}

/// Reads an export file. Unlike a log, ids need not be contiguous.
pub fn read_export(path: &Path) -> Result<Vec<Entry>> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let (lines, report) = split_records(&bytes, EXPORT_HEADER)?;
    if let Some(report) = report {
        return Err(Error::Corrupt {
            line: 0,
            message: format!("export file ends mid-record ({} bytes)", report.dropped_bytes),
        });
    }
    let mut entries = Vec::new();
    for (line_no, line) in lines.unwrap_or_default() {
        match decode(line) {
            Ok(Decoded::Entry(entry)) => entries.push(entry),
            Ok(Decoded::Tag(_)) => {
                return Err(Error::Corrupt {
                    line: line_no,
                    message: "export files hold entries only".into(),
                })
            }
            Err(message) => {
                return Err(Error::Corrupt {
                    line: line_no,
                    message,
                })
            }
        }
    }
    Ok(entries)
}

/// Path of the log named `name` next to `sibling`.
pub fn sibling_log_path(sibling: &Path, name: &str) -> PathBuf {
    let dir = sibling.parent().unwrap_or_else(|| Path::new(""));
    dir.join(format!("{name}.{LOG_EXTENSION}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassDef, PackageDef};

    fn add_package(name: &str) -> Event {
        Event::PackageAdded {
            def: PackageDef { name: name.into() },
        }
    }

    fn add_class(p: &str, c: &str) -> Event {
        Event::ClassAdded {
            def: ClassDef::new(p, c),
        }
    }

    #[test]
    fn appends_chain_through_head() {
        let mut log = Log::in_memory("L").unwrap();
        let first = log.append(add_package("P"), [], None).unwrap().clone();
        assert_eq!(first.parent, None);
        let second = log.append(add_class("P", "A"), [], None).unwrap().clone();
        assert_eq!(second.parent, Some(first.id.clone()));
        assert_eq!(second.id.seq, first.id.seq + 1);
        assert!(second.tags.contains(TagKey::Author));
        assert!(second.tags.contains(TagKey::Timestamp));
        assert_eq!(log.head(), Some(&second.id));
    }

    #[test]
    fn branch_entries_keep_head() {
        let mut log = Log::in_memory("L").unwrap();
        let root = log.append(add_package("P"), [], None).unwrap().id.clone();
        let main = log.append(add_class("P", "A"), [], None).unwrap().id.clone();
        let side = log
            .append(
                add_class("P", "B"),
                [Tag::text(TagKey::BranchLabel, "fix")],
                Some(root.clone()),
            )
            .unwrap()
            .id
            .clone();
        assert_eq!(log.head(), Some(&main));
        assert!(log.is_side_branch(&side));
        assert_eq!(log.main_line().count(), 2);
    }

    #[test]
    fn unknown_references_are_rejected() {
        let mut log = Log::in_memory("L").unwrap();
        let ghost = EntryId::new("L", 9);
        assert!(matches!(
            log.append(add_package("P"), [], Some(ghost.clone())),
            Err(Error::UnknownEntry(_))
        ));
        assert!(matches!(
            log.append(add_package("P"), [Tag::entry(TagKey::TriggeredBy, ghost.clone())], None),
            Err(Error::UnknownEntry(_))
        ));
        assert!(matches!(
            log.attach_tag(&ghost, Tag::comment("x")),
            Err(Error::UnknownEntry(_))
        ));
        assert!(log.is_empty());
        // redoneFrom may point into another log
        log.append(
            add_package("P"),
            [Tag::entry(TagKey::RedoneFrom, EntryId::new("other", 4))],
            None,
        )
        .unwrap();
    }

    #[test]
    fn file_round_trip_and_tag_after_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("work.omlog");
        let target;
        {
            let (mut log, report) = Log::open(&path).unwrap();
            assert!(report.is_none());
            log.append(add_package("P"), [], None).unwrap();
            target = log.append(add_class("P", "A"), [], None).unwrap().id.clone();
            log.attach_tag(&target, Tag::comment("typo fix")).unwrap();
        }
        let (log, report) = Log::load(&path).unwrap();
        assert!(report.is_none());
        assert_eq!(log.len(), 2);
        assert_eq!(log.records().len(), 3);
        assert_eq!(
            log.entry(&target).unwrap().tags.text(TagKey::Comment),
            Some("typo fix")
        );
        assert_eq!(target.to_string(), "work:2");
    }

    #[test]
    fn second_writer_is_locked_out() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.omlog");
        let (_log, _) = Log::open(&path).unwrap();
        assert!(matches!(Log::open(&path), Err(Error::Locked { .. })));
        // readers are fine
        Log::load(&path).unwrap();
    }

    #[test]
    fn torn_tail_is_dropped_and_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.omlog");
        {
            let (mut log, _) = Log::open(&path).unwrap();
            log.append(add_package("P"), [], None).unwrap();
        }
        let mut bytes = fs::read(&path).unwrap();
        let intact = bytes.len();
        bytes.extend_from_slice(b"{\"recordType\":\"ent");
        fs::write(&path, &bytes).unwrap();
        let (log, report) = Log::open(&path).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(report.unwrap().valid_len, intact as u64);
        assert_eq!(fs::metadata(&path).unwrap().len(), intact as u64);
    }

    #[test]
    fn corrupt_middle_record_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.omlog");
        fs::write(&path, "omlog 1\nnot json\n").unwrap();
        assert!(matches!(Log::load(&path), Err(Error::Corrupt { line: 2, .. })));
        fs::write(&path, "omlog 9\n").unwrap();
        assert!(matches!(Log::load(&path), Err(Error::Version { .. })));
    }

    #[test]
    fn after_last_save() {
        let mut log = Log::in_memory("L").unwrap();
        log.append(Event::SessionStart { session_id: "1".into() }, [], None).unwrap();
        log.append(add_package("P"), [], None).unwrap();
        assert_eq!(log.entries_after_last_save().len(), 1);
        log.append(Event::SessionSave { label: None }, [], None).unwrap();
        assert!(log.entries_after_last_save().is_empty());
    }

    #[test]
    fn query_on_empty_log() {
        let log = Log::in_memory("L").unwrap();
        assert!(log.query(&EntryFilter::default()).is_empty());
    }
}
