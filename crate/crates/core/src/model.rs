//! Code-unit identities, definition snapshots, events and tags.
//!
//! Everything here is plain immutable data. Events are declarative: they
//! describe what happened to which unit, carrying full snapshots so that
//! any elementary change can be reverted or re-applied without consulting
//! the codebase it was recorded against.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Stable identity of a package, class, or method.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodeUnitRef {
    Package {
        package: String,
    },
    Class {
        package: String,
        class: String,
    },
    Method {
        package: String,
        class: String,
        class_side: bool,
        selector: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitKind {
    Package,
    Class,
    Method,
}

impl CodeUnitRef {
    pub fn package(name: impl Into<String>) -> Self {
        CodeUnitRef::Package {
            package: name.into(),
        }
    }

    pub fn class(package: impl Into<String>, class: impl Into<String>) -> Self {
        CodeUnitRef::Class {
            package: package.into(),
            class: class.into(),
        }
    }

    pub fn method(
        package: impl Into<String>,
        class: impl Into<String>,
        class_side: bool,
        selector: impl Into<String>,
    ) -> Self {
        CodeUnitRef::Method {
            package: package.into(),
            class: class.into(),
            class_side,
            selector: selector.into(),
        }
    }

    pub fn kind(&self) -> UnitKind {
        match self {
            CodeUnitRef::Package { .. } => UnitKind::Package,
            CodeUnitRef::Class { .. } => UnitKind::Class,
            CodeUnitRef::Method { .. } => UnitKind::Method,
        }
    }

    pub fn package_name(&self) -> &str {
        match self {
            CodeUnitRef::Package { package }
            | CodeUnitRef::Class { package, .. }
            | CodeUnitRef::Method { package, .. } => package,
        }
    }

    pub fn class_name(&self) -> Option<&str> {
        match self {
            CodeUnitRef::Package { .. } => None,
            CodeUnitRef::Class { class, .. } | CodeUnitRef::Method { class, .. } => Some(class),
        }
    }

    pub fn selector(&self) -> Option<&str> {
        match self {
            CodeUnitRef::Method { selector, .. } => Some(selector),
            _ => None,
        }
    }

    pub fn is_class_side(&self) -> bool {
        matches!(self, CodeUnitRef::Method { class_side: true, .. })
    }

    /// The directly enclosing unit, if any.
    pub fn parent(&self) -> Option<CodeUnitRef> {
        match self {
            CodeUnitRef::Package { .. } => None,
            CodeUnitRef::Class { package, .. } => Some(CodeUnitRef::package(package.clone())),
            CodeUnitRef::Method { package, class, .. } => {
                Some(CodeUnitRef::class(package.clone(), class.clone()))
            }
        }
    }

    /// This unit followed by every enclosing unit, innermost first.
    pub fn enclosing_chain(&self) -> Vec<CodeUnitRef> {
        let mut chain = vec![self.clone()];
        let mut cursor = self.parent();
        while let Some(unit) = cursor {
            cursor = unit.parent();
            chain.push(unit);
        }
        chain
    }

    /// True when `other` is this unit or lies inside it.
    pub fn contains(&self, other: &CodeUnitRef) -> bool {
        other.enclosing_chain().iter().any(|u| u == self)
    }

    /// Short label used in views and log listings (`A`, `A>>m`, `A class>>m`, `package P`).
    pub fn short_label(&self) -> String {
        match self {
            CodeUnitRef::Package { package } => format!("package {package}"),
            CodeUnitRef::Class { class, .. } => class.clone(),
            CodeUnitRef::Method {
                class,
                class_side,
                selector,
                ..
            } => {
                if *class_side {
                    format!("{class} class>>{selector}")
                } else {
                    format!("{class}>>{selector}")
                }
            }
        }
    }
}

impl fmt::Display for CodeUnitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeUnitRef::Package { package } => write!(f, "{package}"),
            CodeUnitRef::Class { package, class } => write!(f, "{package}/{class}"),
            CodeUnitRef::Method {
                package,
                class,
                class_side,
                selector,
            } => {
                let side = if *class_side { " class" } else { "" };
                write!(f, "{package}/{class}{side}>>{selector}")
            }
        }
    }
}

fn bad_ref(text: &str, why: &str) -> Error {
    Error::InvalidArgument(format!("malformed unit ref {text:?}: {why}"))
}

impl FromStr for CodeUnitRef {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self, Error> {
        let (package, rest) = match text.split_once('/') {
            Some((p, r)) => (p, Some(r)),
            None => (text, None),
        };
        if text.contains(">>") && rest.is_none() {
            return Err(bad_ref(text, "misplaced `>>`"));
        }
        if !is_package_name(package) {
            return Err(bad_ref(text, "bad package segment"));
        }
        let Some(rest) = rest else {
            return Ok(CodeUnitRef::package(package));
        };
        match rest.split_once(">>") {
            None => {
                if !is_identifier(rest) {
                    return Err(bad_ref(text, "bad class segment"));
                }
                Ok(CodeUnitRef::class(package, rest))
            }
            Some((class_part, selector)) => {
                let (class, class_side) = match class_part.strip_suffix(" class") {
                    Some(c) => (c, true),
                    None => (class_part, false),
                };
                if !is_identifier(class) {
                    return Err(bad_ref(text, "bad class segment"));
                }
                if !is_selector(selector) {
                    return Err(bad_ref(text, "bad selector"));
                }
                Ok(CodeUnitRef::method(package, class, class_side, selector))
            }
        }
    }
}

impl Serialize for CodeUnitRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CodeUnitRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Package names additionally allow `-` and `.` (`Fuel-Core`).
pub fn is_package_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Unary (`foo`) or keyword (`at:put:`) selector.
pub fn is_selector(s: &str) -> bool {
    if is_identifier(s) {
        return true;
    }
    match s.strip_suffix(':') {
        Some(body) => body.split(':').all(is_identifier),
        None => false,
    }
}

pub fn is_unary_selector(s: &str) -> bool {
    is_identifier(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageDef {
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassDef {
    pub name: String,
    pub package_name: String,
    pub superclass_name: String,
    pub instance_variables: Vec<String>,
    pub comment: String,
}

impl ClassDef {
    pub fn new(package: impl Into<String>, name: impl Into<String>) -> Self {
        ClassDef {
            name: name.into(),
            package_name: package.into(),
            superclass_name: "Object".to_string(),
            instance_variables: Vec::new(),
            comment: String::new(),
        }
    }

    pub fn unit(&self) -> CodeUnitRef {
        CodeUnitRef::class(self.package_name.clone(), self.name.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MethodDef {
    pub class_ref: CodeUnitRef,
    pub class_side: bool,
    pub selector: String,
    pub protocol: String,
    pub source: String,
}

impl MethodDef {
    pub fn new(
        package: impl Into<String>,
        class: impl Into<String>,
        selector: impl Into<String>,
        source: impl Into<String>,
    ) -> Self {
        MethodDef {
            class_ref: CodeUnitRef::class(package, class),
            class_side: false,
            selector: selector.into(),
            protocol: "as yet unclassified".to_string(),
            source: source.into(),
        }
    }

    pub fn unit(&self) -> CodeUnitRef {
        CodeUnitRef::method(
            self.class_ref.package_name(),
            self.class_ref.class_name().unwrap_or_default(),
            self.class_side,
            self.selector.clone(),
        )
    }

    pub fn package_name(&self) -> &str {
        self.class_ref.package_name()
    }

    pub fn class_name(&self) -> &str {
        self.class_ref.class_name().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "camelCase")]
pub enum Definition {
    Package(PackageDef),
    Class(ClassDef),
    Method(MethodDef),
}

impl Definition {
    pub fn unit(&self) -> CodeUnitRef {
        match self {
            Definition::Package(p) => CodeUnitRef::package(p.name.clone()),
            Definition::Class(c) => c.unit(),
            Definition::Method(m) => m.unit(),
        }
    }
}

/// Sequence-numbered identity of a log entry, rendered `<logName>:<seq>`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId {
    pub log: String,
    pub seq: u64,
}

impl EntryId {
    pub fn new(log: impl Into<String>, seq: u64) -> Self {
        EntryId {
            log: log.into(),
            seq,
        }
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.log, self.seq)
    }
}

impl FromStr for EntryId {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self, Error> {
        let bad = || Error::InvalidArgument(format!("malformed entry id {text:?}"));
        let (log, seq) = text.rsplit_once(':').ok_or_else(bad)?;
        if log.is_empty() || log.contains(char::is_whitespace) {
            return Err(bad());
        }
        let seq: u64 = seq.parse().map_err(|_| bad())?;
        if seq == 0 {
            return Err(bad());
        }
        Ok(EntryId::new(log, seq))
    }
}

impl Serialize for EntryId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntryId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Typed representation of one operation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "eventKind", content = "payload")]
pub enum Event {
    PackageAdded {
        def: PackageDef,
    },
    PackageRemoved {
        def: PackageDef,
    },
    ClassAdded {
        def: ClassDef,
    },
    ClassRemoved {
        def: ClassDef,
    },
    ClassModified {
        before: ClassDef,
        after: ClassDef,
    },
    MethodAdded {
        def: MethodDef,
    },
    MethodRemoved {
        def: MethodDef,
    },
    MethodModified {
        before: MethodDef,
        after: MethodDef,
    },
    #[serde(rename_all = "camelCase")]
    RenameMethod {
        old_ref: CodeUnitRef,
        new_selector: String,
    },
    #[serde(rename_all = "camelCase")]
    RenameClass {
        old_ref: CodeUnitRef,
        new_name: String,
    },
    #[serde(rename_all = "camelCase")]
    SessionStart {
        session_id: String,
    },
    SessionSave {
        label: Option<String>,
    },
    SessionEnd,
    ExpressionEvaluation {
        source: String,
    },
    #[serde(rename_all = "camelCase")]
    LoadVersion {
        package_name: String,
        version_label: String,
    },
    #[serde(rename_all = "camelCase")]
    SaveVersion {
        package_name: String,
        version_label: String,
    },
    Undo {
        target: EntryId,
    },
    Redo {
        target: EntryId,
    },
    Condense {
        unit: CodeUnitRef,
    },
    #[serde(rename_all = "camelCase")]
    Split {
        targets: Vec<EntryId>,
        branch_label: String,
    },
}

impl Event {
    /// The serialized `eventKind` discriminator.
    pub fn kind(&self) -> &'static str {
        match self {
            Event::PackageAdded { .. } => "PackageAdded",
            Event::PackageRemoved { .. } => "PackageRemoved",
            Event::ClassAdded { .. } => "ClassAdded",
            Event::ClassRemoved { .. } => "ClassRemoved",
            Event::ClassModified { .. } => "ClassModified",
            Event::MethodAdded { .. } => "MethodAdded",
            Event::MethodRemoved { .. } => "MethodRemoved",
            Event::MethodModified { .. } => "MethodModified",
            Event::RenameMethod { .. } => "RenameMethod",
            Event::RenameClass { .. } => "RenameClass",
            Event::SessionStart { .. } => "SessionStart",
            Event::SessionSave { .. } => "SessionSave",
            Event::SessionEnd => "SessionEnd",
            Event::ExpressionEvaluation { .. } => "ExpressionEvaluation",
            Event::LoadVersion { .. } => "LoadVersion",
            Event::SaveVersion { .. } => "SaveVersion",
            Event::Undo { .. } => "Undo",
            Event::Redo { .. } => "Redo",
            Event::Condense { .. } => "Condense",
            Event::Split { .. } => "Split",
        }
    }

    /// Elementary code changes are the only events that mutate a codebase.
    pub fn is_elementary(&self) -> bool {
        matches!(
            self,
            Event::PackageAdded { .. }
                | Event::PackageRemoved { .. }
                | Event::ClassAdded { .. }
                | Event::ClassRemoved { .. }
                | Event::ClassModified { .. }
                | Event::MethodAdded { .. }
                | Event::MethodRemoved { .. }
                | Event::MethodModified { .. }
        )
    }

    pub fn is_refactoring(&self) -> bool {
        matches!(self, Event::RenameMethod { .. } | Event::RenameClass { .. })
    }

    pub fn is_addition(&self) -> bool {
        matches!(
            self,
            Event::PackageAdded { .. } | Event::ClassAdded { .. } | Event::MethodAdded { .. }
        )
    }

    pub fn is_removal(&self) -> bool {
        matches!(
            self,
            Event::PackageRemoved { .. } | Event::ClassRemoved { .. } | Event::MethodRemoved { .. }
        )
    }

    /// The unit(s) an elementary change is about. A class rename has two.
    pub fn subjects(&self) -> Vec<CodeUnitRef> {
        match self {
            Event::PackageAdded { def } | Event::PackageRemoved { def } => {
                vec![CodeUnitRef::package(def.name.clone())]
            }
            Event::ClassAdded { def } | Event::ClassRemoved { def } => vec![def.unit()],
            Event::ClassModified { before, after } => {
                let mut units = vec![before.unit()];
                if after.unit() != before.unit() {
                    units.push(after.unit());
                }
                units
            }
            Event::MethodAdded { def } | Event::MethodRemoved { def } => vec![def.unit()],
            Event::MethodModified { before, after } => {
                let mut units = vec![before.unit()];
                if after.unit() != before.unit() {
                    units.push(after.unit());
                }
                units
            }
            _ => Vec::new(),
        }
    }

    /// Subject units plus every enclosing unit, without duplicates, innermost first.
    pub fn affected_units(&self) -> Vec<CodeUnitRef> {
        let roots: Vec<CodeUnitRef> = match self {
            Event::RenameMethod { old_ref, .. } | Event::RenameClass { old_ref, .. } => {
                vec![old_ref.clone()]
            }
            Event::Condense { unit } => vec![unit.clone()],
            Event::LoadVersion { package_name, .. } | Event::SaveVersion { package_name, .. } => {
                vec![CodeUnitRef::package(package_name.clone())]
            }
            // Split targets are entry ids; the log resolves their units.
            Event::Split { .. } => Vec::new(),
            _ => self.subjects(),
        };
        let mut out: Vec<CodeUnitRef> = Vec::new();
        for root in roots {
            for unit in root.enclosing_chain() {
                if !out.contains(&unit) {
                    out.push(unit);
                }
            }
        }
        out
    }

    /// Human label in the style of a log listing: `add A>>m`, `undo (add A)`.
    pub fn describe(&self) -> String {
        match self {
            Event::PackageAdded { def } => format!("add package {}", def.name),
            Event::PackageRemoved { def } => format!("remove package {}", def.name),
            Event::ClassAdded { def } => format!("add {}", def.name),
            Event::ClassRemoved { def } => format!("remove {}", def.name),
            Event::ClassModified { before, after } => {
                if before.name == after.name {
                    format!("modify {}", before.name)
                } else {
                    format!("modify {} (as {})", before.name, after.name)
                }
            }
            Event::MethodAdded { def } => format!("add {}", def.unit().short_label()),
            Event::MethodRemoved { def } => format!("remove {}", def.unit().short_label()),
            Event::MethodModified { before, .. } => {
                format!("modify {}", before.unit().short_label())
            }
            Event::RenameMethod {
                old_ref,
                new_selector,
            } => {
                let old = old_ref.short_label();
                let renamed = CodeUnitRef::method(
                    old_ref.package_name(),
                    old_ref.class_name().unwrap_or_default(),
                    old_ref.is_class_side(),
                    new_selector.clone(),
                );
                format!("rename {old} to {}", renamed.short_label())
            }
            Event::RenameClass { old_ref, new_name } => {
                format!("rename class {} to {new_name}", old_ref.short_label())
            }
            Event::SessionStart { .. } => "new session".to_string(),
            Event::SessionSave { label: None } => "save session".to_string(),
            Event::SessionSave { label: Some(l) } => format!("save session {l}"),
            Event::SessionEnd => "end session".to_string(),
            Event::ExpressionEvaluation { source } => format!("evaluate {source:?}"),
            Event::LoadVersion {
                package_name,
                version_label,
            } => format!("load package {package_name} version {version_label}"),
            Event::SaveVersion {
                package_name,
                version_label,
            } => format!("save {package_name} version {version_label}"),
            Event::Undo { target } => format!("undo {target}"),
            Event::Redo { target } => format!("redo {target}"),
            Event::Condense { unit } => format!("condense {}", unit.short_label()),
            Event::Split {
                targets,
                branch_label,
            } => {
                let ids: Vec<String> = targets.iter().map(ToString::to_string).collect();
                format!("split ({}) to {branch_label}", ids.join(", "))
            }
        }
    }
}

/// Keys of an entry's tag dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TagKey {
    Author,
    Timestamp,
    TriggeredBy,
    RedoneFrom,
    RefactoringOf,
    CommitLabel,
    Comment,
    BranchLabel,
}

impl TagKey {
    pub const ALL: [TagKey; 8] = [
        TagKey::Author,
        TagKey::Timestamp,
        TagKey::TriggeredBy,
        TagKey::RedoneFrom,
        TagKey::RefactoringOf,
        TagKey::CommitLabel,
        TagKey::Comment,
        TagKey::BranchLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TagKey::Author => "author",
            TagKey::Timestamp => "timestamp",
            TagKey::TriggeredBy => "triggeredBy",
            TagKey::RedoneFrom => "redoneFrom",
            TagKey::RefactoringOf => "refactoringOf",
            TagKey::CommitLabel => "commitLabel",
            TagKey::Comment => "comment",
            TagKey::BranchLabel => "branchLabel",
        }
    }

    /// Keys whose values are entry references rather than text.
    pub fn references_entry(self) -> bool {
        matches!(
            self,
            TagKey::TriggeredBy | TagKey::RedoneFrom | TagKey::RefactoringOf
        )
    }

    pub fn repeatable(self) -> bool {
        matches!(self, TagKey::Comment | TagKey::RedoneFrom)
    }
}

impl fmt::Display for TagKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TagKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        TagKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tag key {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TagValue {
    Text(String),
    Entry(EntryId),
}

impl TagValue {
    pub fn as_entry(&self) -> Option<&EntryId> {
        match self {
            TagValue::Entry(id) => Some(id),
            TagValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            TagValue::Text(t) => Some(t),
            TagValue::Entry(_) => None,
        }
    }
}

impl fmt::Display for TagValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagValue::Text(t) => f.write_str(t),
            TagValue::Entry(id) => write!(f, "{id}"),
        }
    }
}

/// One key/value annotation on an entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tag {
    pub key: TagKey,
    pub value: TagValue,
}

impl Tag {
    /// Builds a tag, checking that the value kind matches the key.
    pub fn new(key: TagKey, value: TagValue) -> Result<Self, Error> {
        let ok = match &value {
            TagValue::Entry(_) => key.references_entry(),
            TagValue::Text(t) => !key.references_entry() && !(key == TagKey::Author && t.is_empty()),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "tag {key} cannot hold value {value}"
            )));
        }
        Ok(Tag { key, value })
    }

    /// Parses a `key=value` pair; entry-valued keys parse the value as an id.
    pub fn parse_pair(key: &str, value: &str) -> Result<Self, Error> {
        let key: TagKey = key.parse()?;
        let value = if key.references_entry() {
            TagValue::Entry(value.parse()?)
        } else {
            TagValue::Text(value.to_string())
        };
        Tag::new(key, value)
    }

    pub fn text(key: TagKey, value: impl Into<String>) -> Self {
        debug_assert!(!key.references_entry());
        Tag {
            key,
            value: TagValue::Text(value.into()),
        }
    }

    pub fn entry(key: TagKey, id: EntryId) -> Self {
        debug_assert!(key.references_entry());
        Tag {
            key,
            value: TagValue::Entry(id),
        }
    }

    pub fn comment(text: impl Into<String>) -> Self {
        Tag::text(TagKey::Comment, text)
    }

    pub fn commit_label(text: impl Into<String>) -> Self {
        Tag::text(TagKey::CommitLabel, text)
    }
}

/// Tag dictionary of an entry. Repeatable keys keep every value in
/// insertion order; other keys keep the latest value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tags(BTreeMap<TagKey, Vec<TagValue>>);

impl Tags {
    pub fn new() -> Self {
        Tags::default()
    }

    pub fn insert(&mut self, tag: Tag) {
        let slot = self.0.entry(tag.key).or_default();
        if tag.key.repeatable() {
            slot.push(tag.value);
        } else {
            *slot = vec![tag.value];
        }
    }

    pub fn get(&self, key: TagKey) -> &[TagValue] {
        self.0.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn first(&self, key: TagKey) -> Option<&TagValue> {
        self.get(key).first()
    }

    pub fn text(&self, key: TagKey) -> Option<&str> {
        self.first(key).and_then(TagValue::as_text)
    }

    pub fn entry(&self, key: TagKey) -> Option<&EntryId> {
        self.first(key).and_then(TagValue::as_entry)
    }

    pub fn contains(&self, key: TagKey) -> bool {
        !self.get(key).is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Tag> + '_ {
        self.0.iter().flat_map(|(key, values)| {
            values.iter().map(move |v| Tag {
                key: *key,
                value: v.clone(),
            })
        })
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(Vec::is_empty)
    }
}

impl FromIterator<Tag> for Tags {
    fn from_iter<I: IntoIterator<Item = Tag>>(iter: I) -> Self {
        let mut tags = Tags::new();
        for tag in iter {
            tags.insert(tag);
        }
        tags
    }
}

impl Serialize for Tags {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&'static str, Vec<String>> = self
            .0
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.as_str(), v.iter().map(ToString::to_string).collect()))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tags {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, Vec<String>>::deserialize(d)?;
        let mut tags = Tags::new();
        for (key, values) in raw {
            for value in values {
                let tag = Tag::parse_pair(&key, &value).map_err(serde::de::Error::custom)?;
                tags.insert(tag);
            }
        }
        Ok(tags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn method(p: &str, c: &str, s: &str) -> MethodDef {
        MethodDef::new(p, c, s, format!("{s} ^ 1"))
    }

    #[test]
    fn method_added_affects_enclosing_chain() {
        let event = Event::MethodAdded {
            def: method("P", "A", "m"),
        };
        let units: Vec<String> = event.affected_units().iter().map(|u| u.to_string()).collect();
        assert_eq!(units, ["P/A>>m", "P/A", "P"]);
    }

    #[test]
    fn system_events_touch_no_code() {
        let event = Event::SessionStart {
            session_id: "1".into(),
        };
        assert!(event.affected_units().is_empty());
        assert!(Event::SessionEnd.affected_units().is_empty());
        let undo = Event::Undo {
            target: EntryId::new("L", 3),
        };
        assert!(undo.affected_units().is_empty());
    }

    #[test]
    fn class_modified_affects_class_and_package() {
        let a = ClassDef::new("P", "A");
        let mut a2 = a.clone();
        a2.instance_variables.push("x".into());
        let event = Event::ClassModified {
            before: a,
            after: a2,
        };
        let units: Vec<String> = event.affected_units().iter().map(|u| u.to_string()).collect();
        assert_eq!(units, ["P/A", "P"]);
    }

    #[test]
    fn version_events_affect_package() {
        let event = Event::LoadVersion {
            package_name: "P".into(),
            version_label: "1".into(),
        };
        assert_eq!(event.affected_units(), vec![CodeUnitRef::package("P")]);
        let condense = Event::Condense {
            unit: CodeUnitRef::class("P", "A"),
        };
        assert_eq!(condense.affected_units().len(), 2);
    }

    #[test]
    fn ref_text_forms() {
        let m: CodeUnitRef = "P/A>>m".parse().unwrap();
        assert_eq!(m, CodeUnitRef::method("P", "A", false, "m"));
        let p: CodeUnitRef = "P".parse().unwrap();
        assert_eq!(p, CodeUnitRef::package("P"));
        let cs: CodeUnitRef = "P/A class>>new".parse().unwrap();
        assert_eq!(cs, CodeUnitRef::method("P", "A", true, "new"));
        assert_eq!(cs.to_string(), "P/A class>>new");
        let kw: CodeUnitRef = "P/A>>at:put:".parse().unwrap();
        assert_eq!(kw.selector(), Some("at:put:"));
    }

    #[test]
    fn ref_parse_rejects_malformed() {
        for bad in [
            "", "/A", "P/", "P//A", "P/A>>", "P>>m", "P/>>m", "P/A>>>m", "P/A/B", "P/A>>m>>n",
            "P/A class", "1P", "P/A b>>m", "P/A>>at:put",
        ] {
            assert!(bad.parse::<CodeUnitRef>().is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn entry_id_round_trip() {
        let id: EntryId = "crashed:17".parse().unwrap();
        assert_eq!(id, EntryId::new("crashed", 17));
        assert_eq!(id.to_string(), "crashed:17");
        assert!("crashed:0".parse::<EntryId>().is_err());
        assert!(":3".parse::<EntryId>().is_err());
        assert!("x".parse::<EntryId>().is_err());
    }

    #[test]
    fn tags_repeat_only_where_allowed() {
        let mut tags = Tags::new();
        tags.insert(Tag::comment("one"));
        tags.insert(Tag::comment("two"));
        tags.insert(Tag::commit_label("v1"));
        tags.insert(Tag::commit_label("v2"));
        let comments: Vec<_> = tags.get(TagKey::Comment).iter().map(|v| v.to_string()).collect();
        assert_eq!(comments, ["one", "two"]);
        assert_eq!(tags.text(TagKey::CommitLabel), Some("v2"));
    }

    #[test]
    fn tag_value_kind_is_checked() {
        assert!(Tag::parse_pair("triggeredBy", "L:2").is_ok());
        assert!(Tag::parse_pair("triggeredBy", "nonsense").is_err());
        assert!(Tag::parse_pair("author", "").is_err());
        assert!(Tag::parse_pair("colour", "red").is_err());
        assert!(Tag::new(TagKey::Comment, TagValue::Entry(EntryId::new("L", 1))).is_err());
    }

    #[test]
    fn tags_serialize_as_key_to_list() {
        let tags: Tags = [
            Tag::text(TagKey::Author, "ann"),
            Tag::entry(TagKey::RedoneFrom, EntryId::new("crashed", 5)),
        ]
        .into_iter()
        .collect();
        let json = serde_json::to_string(&tags).unwrap();
        assert_eq!(json, r#"{"author":["ann"],"redoneFrom":["crashed:5"]}"#);
        let back: Tags = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tags);
    }

    #[test]
    fn describe_matches_listing_style() {
        let add = Event::MethodAdded {
            def: method("P", "A", "m"),
        };
        assert_eq!(add.describe(), "add A>>m");
        let rename = Event::RenameMethod {
            old_ref: "P/A>>m".parse().unwrap(),
            new_selector: "p".into(),
        };
        assert_eq!(rename.describe(), "rename A>>m to A>>p");
        let pkg = Event::PackageAdded {
            def: PackageDef { name: "P".into() },
        };
        assert_eq!(pkg.describe(), "add package P");
    }
}
