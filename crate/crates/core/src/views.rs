//! Per-unit history trees projected from a log.
//!
//! A view is rebuilt from scratch on every query by walking the log in
//! append order:
//!
//! * an elementary event whose subject is the viewed unit becomes a node
//!   under the current head, triggered inverses included;
//! * for a container unit, an undo cancels the target's node instead: the
//!   active path from the cancelled node onwards is superseded (kept as a
//!   grey branch) and the survivors after it are re-attached as synthetic
//!   `redone` nodes. When cancelling would not reproduce the state the undo
//!   left (a rename, re-creation or emptied container in between), the undo
//!   is shown as the literal change it made;
//! * re-logged entries (`redoneFrom`) are ordinary literal nodes;
//! * side-branch entries fork from the nearest ancestor shown in the view;
//! * when an entry was redone from a related log that is available, the
//!   originals are shown as a grey branch at the point where they were
//!   replayed.
//!
//! Session boundaries and other system events never produce nodes.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::codebase::{invert, Codebase};
use crate::log::{Entry, Log};
use crate::model::{ClassDef, CodeUnitRef, Definition, EntryId, Event, PackageDef, TagKey};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewNode {
    pub id: NodeId,
    /// The entry this node shows (the original entry for synthetic nodes).
    pub source: EntryId,
    pub description: String,
    /// Re-linearized survivor that was not literally re-logged.
    pub synthetic: bool,
    /// On a branch that no longer leads to the head.
    pub superseded: bool,
    pub labels: Vec<String>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    subjects: Vec<CodeUnitRef>,
}

impl ViewNode {
    /// A parentless, childless literal node.
    pub fn detached(source: EntryId, description: impl Into<String>) -> ViewNode {
        ViewNode {
            id: 0,
            source,
            description: description.into(),
            synthetic: false,
            superseded: false,
            labels: Vec::new(),
            parent: None,
            children: Vec::new(),
            subjects: Vec::new(),
        }
    }
}

/// History tree of one code unit. Nodes are stored in creation order,
/// which is also their display order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub unit: CodeUnitRef,
    pub nodes: Vec<ViewNode>,
    pub head: Option<NodeId>,
}

impl View {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = &ViewNode> {
        self.nodes.iter().filter(|n| n.parent.is_none())
    }

    /// Nodes from the head's root down to the head.
    pub fn head_path(&self) -> Vec<&ViewNode> {
        let mut path = Vec::new();
        let mut cursor = self.head;
        while let Some(id) = cursor {
            let node = &self.nodes[id];
            path.push(node);
            cursor = node.parent;
        }
        path.reverse();
        path
    }

    /// Source entries along the head path.
    pub fn effective_history(&self) -> Vec<EntryId> {
        self.head_path().into_iter().map(|n| n.source.clone()).collect()
    }

    /// Deterministic text rendering: one node per line in creation order.
    /// `|-` continues the previous line, `+- (N)` forks from line N, `o`
    /// starts a disconnected component, grey branches are bracketed, tags
    /// sit in braces and the head carries `<-- head`.
    pub fn render(&self) -> String {
        if self.nodes.is_empty() {
            return format!("(empty view of {})\n", self.unit);
        }
        let width = self.nodes.len().to_string().len();
        let mut out = String::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let grey_start = node.superseded && (i == 0 || !self.nodes[i - 1].superseded);
            let grey_end =
                node.superseded && (i + 1 == self.nodes.len() || !self.nodes[i + 1].superseded);
            let connector = match node.parent {
                None if i == 0 => String::new(),
                None => "o  ".to_string(),
                Some(p) if i > 0 && p == i - 1 => "|- ".to_string(),
                Some(p) => format!("+- ({}) ", p + 1),
            };
            let _ = write!(
                out,
                "{:>width$} {} {connector}{}",
                i + 1,
                if grey_start { "[" } else { " " },
                node.description
            );
            for label in &node.labels {
                let _ = write!(out, " {{{label}}}");
            }
            if grey_end {
                out.push_str(" ]");
            }
            if self.head == Some(node.id) {
                out.push_str(" <-- head");
            }
            out.push('\n');
        }
        out
    }
}

/// Tag labels shown next to a node.
fn entry_labels(entry: &Entry, lookup: &dyn Fn(&EntryId) -> Option<Entry>) -> Vec<String> {
    let mut labels = Vec::new();
    if entry.tags.contains(TagKey::RedoneFrom) {
        labels.push("redone".to_string());
    }
    for value in entry.tags.get(TagKey::RefactoringOf) {
        let text = value
            .as_entry()
            .and_then(lookup)
            .map(|e| e.event.describe())
            .unwrap_or_else(|| "refactoring".to_string());
        labels.push(text);
    }
    if let Some(label) = entry.tags.text(TagKey::CommitLabel) {
        labels.push(label.to_string());
    }
    for value in entry.tags.get(TagKey::Comment) {
        labels.push(format!("'{value}'"));
    }
    labels
}

/// Builds views over a log, optionally consulting related logs (for
/// instance a crashed session's log) to show the originals of redone entries.
pub struct ViewBuilder<'a> {
    log: &'a Log,
    related: Vec<&'a Log>,
}

impl<'a> ViewBuilder<'a> {
    pub fn new(log: &'a Log) -> Self {
        ViewBuilder {
            log,
            related: Vec::new(),
        }
    }

    pub fn with_related(mut self, log: &'a Log) -> Self {
        self.related.push(log);
        self
    }

    fn lookup(&self, id: &EntryId) -> Option<Entry> {
        if let Some(e) = self.log.entry(id) {
            return Some(e.clone());
        }
        self.related.iter().find_map(|l| l.entry(id).cloned())
    }

    fn related_log(&self, name: &str) -> Option<&'a Log> {
        self.related.iter().copied().find(|l| l.name() == name)
    }

    pub fn build(&self, unit: &CodeUnitRef) -> View {
        let mut state = Projection {
            unit,
            nodes: Vec::new(),
            head: None,
            literal: HashMap::new(),
            removed: false,
            foreign_shown: HashSet::new(),
        };
        let lookup = |id: &EntryId| self.lookup(id);
        let entries = self.log.entries();
        for (i, entry) in entries.iter().enumerate() {
            if let Event::Undo { target } = &entry.event {
                self.project_undo(&mut state, entry, target, &lookup);
                continue;
            }
            if !entry.event.is_elementary() || !entry.event.affected_units().contains(unit) {
                continue;
            }
            if self.is_undo_child(entry) {
                continue;
            }
            if self.log.is_side_branch(&entry.id) {
                let parent = self.branch_parent(&state, entry);
                state.add(entry, parent, false, &lookup);
                continue;
            }
            self.show_foreign_originals(&mut state, &entries[i..], &lookup);
            state.add_main(entry, &lookup);
        }
        View {
            unit: unit.clone(),
            nodes: state.nodes,
            head: state.head,
        }
    }

    fn is_undo_child(&self, entry: &Entry) -> bool {
        entry
            .triggered_by()
            .and_then(|id| self.log.entry(id))
            .is_some_and(|cause| matches!(cause.event, Event::Undo { .. }))
    }

    fn project_undo(
        &self,
        state: &mut Projection<'_>,
        undo: &Entry,
        target: &EntryId,
        lookup: &dyn Fn(&EntryId) -> Option<Entry>,
    ) {
        let inverse_of_target = self
            .log
            .entry(target)
            .and_then(|t| invert(&t.event).ok());
        let children: Vec<&Entry> = self
            .log
            .children_of(&undo.id)
            .filter(|c| c.triggered_by() == Some(&undo.id))
            .filter(|c| c.event.is_elementary() && c.event.affected_units().contains(state.unit))
            .collect();
        let all_children: Vec<&Entry> =
            children.iter().copied().filter(|c| !self.log.is_side_branch(&c.id)).collect();
        let path = state.active_path();
        let mut cancelled: HashSet<NodeId> = HashSet::new();
        let mut literal: Vec<&Entry> = Vec::new();
        for child in children {
            if child.event.subjects().contains(state.unit) {
                literal.push(child);
                continue;
            }
            let hits: Vec<NodeId> = if inverse_of_target.as_ref() == Some(&child.event) {
                // The target and every later change to its subject net out
                // to the target's after-state, which the inverse reverts.
                match path.iter().position(|&n| &state.nodes[n].source == target) {
                    Some(at) => {
                        // An undone addition also takes everything inside the unit.
                        let subjects = state.nodes[path[at]].subjects.clone();
                        let inside = child.event.is_removal();
                        let related = |unit: &CodeUnitRef| {
                            subjects
                                .iter()
                                .any(|s| s == unit || (inside && s.contains(unit)))
                        };
                        path[at..]
                            .iter()
                            .copied()
                            .filter(|&n| n == path[at] || state.nodes[n].subjects.iter().any(related))
                            .collect()
                    }
                    None => Vec::new(),
                }
            } else if child.event.is_removal() {
                let subjects = child.event.subjects();
                path.iter()
                    .copied()
                    .filter(|&n| state.nodes[n].subjects.iter().any(|s| subjects.contains(s)))
                    .collect()
            } else {
                Vec::new()
            };
            if hits.is_empty() {
                literal.push(child);
            }
            cancelled.extend(hits);
        }
        if !cancelled.is_empty() {
            if self.cancellation_is_exact(state, &path, &cancelled, &literal, &all_children, lookup) {
                state.supersede(&path, &cancelled);
            } else {
                // renames, re-creations or emptied containers in between: show the
                // undo as the change it made
                literal = all_children;
            }
        }
        for child in literal {
            // an undone removal brings the unit back on the same chain
            if child.event.is_addition() {
                state.removed = false;
            }
            state.add_main(child, lookup);
        }
    }

    /// Whether dropping `cancelled` from `path` (plus the `kept` literal
    /// children) ends in the same state of the unit as appending all of the
    /// undo's `children`, with both replays succeeding.
    fn cancellation_is_exact(
        &self,
        state: &Projection<'_>,
        path: &[NodeId],
        cancelled: &HashSet<NodeId>,
        kept: &[&Entry],
        children: &[&Entry],
        lookup: &dyn Fn(&EntryId) -> Option<Entry>,
    ) -> bool {
        let event_of = |n: NodeId| lookup(&state.nodes[n].source).map(|e| e.event);
        let mut net = Vec::new();
        let mut full = Vec::new();
        for &n in path {
            let Some(event) = event_of(n) else { return false };
            if !cancelled.contains(&n) {
                net.push(event.clone());
            }
            full.push(event);
        }
        net.extend(kept.iter().map(|c| c.event.clone()));
        full.extend(children.iter().map(|c| c.event.clone()));
        match (replay_unit(state.unit, &net), replay_unit(state.unit, &full)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    fn branch_parent(&self, state: &Projection<'_>, entry: &Entry) -> Option<NodeId> {
        let mut cursor = entry.parent.clone();
        while let Some(id) = cursor {
            if let Some(&node) = state.literal.get(&id) {
                return Some(node);
            }
            cursor = self.log.entry(&id).and_then(|e| e.parent.clone());
        }
        None
    }

    /// Before the first of a run of entries redone from a related log,
    /// shows the originals of the whole run as a grey branch at the head.
    fn show_foreign_originals(
        &self,
        state: &mut Projection<'_>,
        upcoming: &[Entry],
        lookup: &dyn Fn(&EntryId) -> Option<Entry>,
    ) {
        let Some(source_log) = upcoming[0]
            .redone_from()
            .filter(|id| id.log != self.log.name() && !state.foreign_shown.contains(*id))
            .and_then(|id| self.related_log(&id.log))
        else {
            return;
        };
        let mut originals = Vec::new();
        for entry in upcoming {
            if !entry.event.is_elementary()
                || !entry.event.affected_units().contains(state.unit)
                || self.log.is_side_branch(&entry.id)
            {
                continue;
            }
            let original = entry
                .redone_from()
                .filter(|id| !state.foreign_shown.contains(*id))
                .and_then(|id| source_log.entry(id));
            match original {
                Some(o) if o.event.affected_units().contains(state.unit) => originals.push(o),
                _ => break,
            }
        }
        let mut parent = state.head;
        for original in originals {
            state.foreign_shown.insert(original.id.clone());
            let node = state.push(original, parent, false, lookup);
            state.nodes[node].superseded = true;
            parent = Some(node);
        }
    }
}

struct Projection<'u> {
    unit: &'u CodeUnitRef,
    nodes: Vec<ViewNode>,
    head: Option<NodeId>,
    literal: HashMap<EntryId, NodeId>,
    /// The viewed unit itself was removed; its next addition starts a new component.
    removed: bool,
    foreign_shown: HashSet<EntryId>,
}

impl Projection<'_> {
    fn push(
        &mut self,
        entry: &Entry,
        parent: Option<NodeId>,
        synthetic: bool,
        lookup: &dyn Fn(&EntryId) -> Option<Entry>,
    ) -> NodeId {
        let id = self.nodes.len();
        let labels = if synthetic {
            vec!["redone".to_string()]
        } else {
            entry_labels(entry, lookup)
        };
        self.nodes.push(ViewNode {
            id,
            source: entry.id.clone(),
            description: entry.event.describe(),
            synthetic,
            superseded: false,
            labels,
            parent,
            children: Vec::new(),
            subjects: entry.event.subjects(),
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    fn add(
        &mut self,
        entry: &Entry,
        parent: Option<NodeId>,
        move_head: bool,
        lookup: &dyn Fn(&EntryId) -> Option<Entry>,
    ) -> NodeId {
        let node = self.push(entry, parent, false, lookup);
        self.literal.insert(entry.id.clone(), node);
        if move_head {
            self.head = Some(node);
        }
        node
    }

    fn add_main(&mut self, entry: &Entry, lookup: &dyn Fn(&EntryId) -> Option<Entry>) {
        let about_unit = entry.event.subjects().contains(self.unit);
        let mut parent = self.head;
        if about_unit && entry.event.is_addition() && self.removed {
            parent = None;
            self.removed = false;
        }
        self.add(entry, parent, true, lookup);
        if about_unit && entry.event.is_removal() {
            self.removed = true;
        }
    }

    fn active_path(&self) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut cursor = self.head;
        while let Some(id) = cursor {
            path.push(id);
            cursor = self.nodes[id].parent;
        }
        path.reverse();
        path
    }

    /// Supersedes the active path from its first cancelled node and
    /// re-attaches the surviving suffix as synthetic nodes.
    fn supersede(&mut self, path: &[NodeId], cancelled: &HashSet<NodeId>) {
        let Some(fork) = path.iter().position(|n| cancelled.contains(n)) else {
            return;
        };
        let survivors: Vec<NodeId> = path[fork + 1..]
            .iter()
            .copied()
            .filter(|n| !cancelled.contains(n))
            .collect();
        for &n in &path[fork..] {
            self.nodes[n].superseded = true;
        }
        self.head = fork.checked_sub(1).map(|i| path[i]);
        for survivor in survivors {
            let original = self.nodes[survivor].clone();
            let id = self.nodes.len();
            self.nodes.push(ViewNode {
                id,
                source: original.source,
                description: original.description,
                synthetic: true,
                superseded: false,
                labels: vec!["redone".to_string()],
                parent: self.head,
                children: Vec::new(),
                subjects: original.subjects,
            });
            if let Some(p) = self.head {
                self.nodes[p].children.push(id);
            }
            self.head = Some(id);
        }
    }
}

/// Replays `events` on top of placeholder containers of `unit` and returns
/// the definitions of the unit and everything inside it.
fn replay_unit(unit: &CodeUnitRef, events: &[Event]) -> Option<Vec<(CodeUnitRef, Option<Definition>)>> {
    let mut cb = Codebase::new();
    for container in unit.enclosing_chain().iter().skip(1).rev() {
        let seed = match container {
            CodeUnitRef::Package { package } => Event::PackageAdded {
                def: PackageDef { name: package.clone() },
            },
            CodeUnitRef::Class { package, class } => Event::ClassAdded {
                def: ClassDef::new(package.clone(), class.clone()),
            },
            _ => return None,
        };
        cb.apply(&seed).ok()?;
    }
    for event in events {
        cb.apply(event).ok()?;
    }
    let mut state: Vec<_> = cb
        .units()
        .into_iter()
        .filter(|u| unit.contains(u))
        .map(|u| {
            let def = cb.definition(&u);
            (u, def)
        })
        .collect();
    state.push((unit.clone(), cb.definition(unit)));
    Some(state)
}

/// View of `unit` over `log` alone.
pub fn build_view(log: &Log, unit: &CodeUnitRef) -> View {
    ViewBuilder::new(log).build(unit)
}

/// Net ordered entries whose replay reproduces `unit`'s current state.
pub fn effective_history(log: &Log, unit: &CodeUnitRef) -> Vec<EntryId> {
    build_view(log, unit).effective_history()
}
