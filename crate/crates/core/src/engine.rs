//! History operations over a workspace: a codebase paired with its log.
//!
//! Every operation first plans its entries against a scratch copy of the
//! codebase and only appends once the whole plan applies, so a conflict
//! never leaves a partial operation in the log. The workspace codebase is
//! always the replay of the log's main-line elementary events.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::codebase::{invert, references_to, replace_token, senders_of, Codebase};
use crate::error::{Conflict, ConflictKind, Error, Result};
use crate::log::{
    read_export, sibling_log_path, write_export, Clock, Entry, EntryFilter, Log, TagAttachment,
    TruncationReport,
};
use crate::model::{
    is_identifier, is_unary_selector, ClassDef, CodeUnitRef, Definition, EntryId, Event, MethodDef,
    PackageDef, Tag, TagKey, UnitKind,
};
use crate::views::{View, ViewBuilder};

/// Replays the main-line elementary events of `log` from an empty codebase.
pub fn replay_main_line(log: &Log) -> std::result::Result<Codebase, (EntryId, Conflict)> {
    let mut codebase = Codebase::new();
    for entry in log.main_line() {
        codebase
            .apply(&entry.event)
            .map_err(|c| (entry.id.clone(), c))?;
    }
    Ok(codebase)
}

/// Outcome of replaying one foreign entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayStatus {
    Applied(EntryId),
    WouldApply,
    Conflict(Conflict),
    Ignored(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub source: EntryId,
    pub description: String,
    pub status: ReplayStatus,
}

/// Per-entry results of a recovery or an import.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplayReport {
    pub outcomes: Vec<ReplayOutcome>,
}

impl ReplayReport {
    pub fn applied(&self) -> Vec<&EntryId> {
        self.outcomes
            .iter()
            .filter_map(|o| match &o.status {
                ReplayStatus::Applied(id) => Some(id),
                _ => None,
            })
            .collect()
    }

    pub fn conflicts(&self) -> Vec<(&EntryId, &Conflict)> {
        self.outcomes
            .iter()
            .filter_map(|o| match &o.status {
                ReplayStatus::Conflict(c) => Some((&o.source, c)),
                _ => None,
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImportMode {
    Replay,
    Inspect,
}

struct Step {
    id: EntryId,
    event: Event,
    tags: Vec<Tag>,
    parent: Option<EntryId>,
}

/// Entries to append, with ids assigned up front and the main-line state
/// they lead to.
struct Plan {
    log_name: String,
    next_seq: u64,
    steps: Vec<Step>,
    codebase: Codebase,
}

impl Plan {
    fn new(ws: &Workspace) -> Plan {
        Plan {
            log_name: ws.log.name().to_string(),
            next_seq: ws.log.next_id().seq,
            steps: Vec::new(),
            codebase: ws.codebase.clone(),
        }
    }

    fn next_id(&mut self) -> EntryId {
        let id = EntryId::new(self.log_name.clone(), self.next_seq);
        self.next_seq += 1;
        id
    }

    /// Main-line entry: applied to the scratch codebase.
    fn push(&mut self, event: Event, tags: Vec<Tag>) -> std::result::Result<EntryId, Conflict> {
        self.codebase.apply(&event)?;
        let id = self.next_id();
        self.steps.push(Step {
            id: id.clone(),
            event,
            tags,
            parent: None,
        });
        Ok(id)
    }

    /// Side-branch entry: must carry a branchLabel tag; leaves the main line alone.
    fn push_side(&mut self, event: Event, tags: Vec<Tag>, parent: EntryId) -> EntryId {
        debug_assert!(tags.iter().any(|t| t.key == TagKey::BranchLabel));
        let id = self.next_id();
        self.steps.push(Step {
            id: id.clone(),
            event,
            tags,
            parent: Some(parent),
        });
        id
    }

    /// The log as it would be after committing.
    fn preview(&self, log: &Log) -> Result<Log> {
        let mut trial = log.scratch_copy();
        for step in &self.steps {
            trial.append(step.event.clone(), step.tags.clone(), step.parent.clone())?;
        }
        Ok(trial)
    }

    fn commit(self, ws: &mut Workspace) -> Result<Vec<EntryId>> {
        let mut ids = Vec::with_capacity(self.steps.len());
        for step in self.steps {
            let appended = ws.log.append(step.event, step.tags, step.parent);
            match appended {
                Ok(entry) => {
                    debug_assert_eq!(entry.id, step.id);
                    ids.push(entry.id.clone());
                }
                Err(err) => {
                    // Keep the master invariant with whatever did land.
                    if let Ok(codebase) = replay_main_line(&ws.log) {
                        ws.codebase = codebase;
                    }
                    return Err(err);
                }
            }
        }
        ws.codebase = self.codebase;
        Ok(ids)
    }
}

fn triggered_by(id: &EntryId) -> Tag {
    Tag::entry(TagKey::TriggeredBy, id.clone())
}

fn redone_from(id: &EntryId) -> Tag {
    Tag::entry(TagKey::RedoneFrom, id.clone())
}

fn refactoring_of(id: &EntryId) -> Tag {
    Tag::entry(TagKey::RefactoringOf, id.clone())
}

fn missing(unit: &CodeUnitRef) -> Error {
    Error::Conflict(Conflict::new(ConflictKind::Missing, unit.clone()))
}

/// A codebase together with the log it is the replay of.
pub struct Workspace {
    codebase: Codebase,
    log: Log,
    session: Option<String>,
    branch_heads: BTreeMap<String, EntryId>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("log", &self.log)
            .field("session", &self.session)
            .field("branch_heads", &self.branch_heads)
            .finish()
    }
}

impl Workspace {
    /// Opens (or creates) the log at `path` for writing and rebuilds the codebase.
    pub fn open(path: &Path) -> Result<(Workspace, Option<TruncationReport>)> {
        let (log, report) = Log::open(path)?;
        Ok((Workspace::from_log(log)?, report))
    }

    pub fn in_memory(name: &str) -> Result<Workspace> {
        Workspace::from_log(Log::in_memory(name)?)
    }

    pub fn from_log(log: Log) -> Result<Workspace> {
        let codebase = replay_main_line(&log).map_err(|(id, conflict)| Error::Corrupt {
            line: 0,
            message: format!("entry {id} does not replay: {conflict}"),
        })?;
        let mut session = None;
        let mut branch_heads = BTreeMap::new();
        for entry in log.entries() {
            match &entry.event {
                Event::SessionStart { session_id } => session = Some(session_id.clone()),
                Event::SessionEnd => session = None,
                _ => {}
            }
            if log.is_side_branch(&entry.id) {
                if let Some(label) = entry.tags.text(TagKey::BranchLabel) {
                    branch_heads.insert(label.to_string(), entry.id.clone());
                }
            }
        }
        Ok(Workspace {
            codebase,
            log,
            session,
            branch_heads,
        })
    }

    pub fn codebase(&self) -> &Codebase {
        &self.codebase
    }

    pub fn log(&self) -> &Log {
        &self.log
    }

    pub fn into_log(self) -> Log {
        self.log
    }

    pub fn current_session(&self) -> Option<&str> {
        self.session.as_deref()
    }

    pub fn branch_heads(&self) -> &BTreeMap<String, EntryId> {
        &self.branch_heads
    }

    pub fn set_author(&mut self, author: impl Into<String>) -> Result<()> {
        self.log.set_author(author)
    }

    pub fn set_clock(&mut self, clock: Clock) {
        self.log.set_clock(clock);
    }

    /// True when the codebase equals the replay of the log's main line.
    pub fn is_consistent(&self) -> bool {
        replay_main_line(&self.log).is_ok_and(|cb| cb == self.codebase)
    }

    fn entry(&self, id: &EntryId) -> Result<&Entry> {
        self.log.require(id)
    }

    fn single(&mut self, event: Event, tags: Vec<Tag>) -> Result<EntryId> {
        let mut plan = Plan::new(self);
        plan.push(event, tags)?;
        Ok(plan.commit(self)?.remove(0))
    }

    // -- sessions and system events ---------------------------------------

    pub fn session_start(&mut self) -> Result<EntryId> {
        let count = self
            .log
            .entries()
            .iter()
            .filter(|e| matches!(e.event, Event::SessionStart { .. }))
            .count();
        let session_id = (count + 1).to_string();
        let id = self.single(
            Event::SessionStart {
                session_id: session_id.clone(),
            },
            Vec::new(),
        )?;
        self.session = Some(session_id);
        Ok(id)
    }

    pub fn session_save(&mut self, label: Option<String>) -> Result<EntryId> {
        self.single(Event::SessionSave { label }, Vec::new())
    }

    pub fn session_end(&mut self) -> Result<EntryId> {
        let id = self.single(Event::SessionEnd, Vec::new())?;
        self.session = None;
        Ok(id)
    }

    /// Records the text of an evaluated expression. Nothing is executed.
    pub fn evaluate(&mut self, source: impl Into<String>) -> Result<EntryId> {
        self.single(
            Event::ExpressionEvaluation {
                source: source.into(),
            },
            Vec::new(),
        )
    }

    // -- recording edits ---------------------------------------------------

    /// Applies an elementary change and logs it. Nothing is logged on conflict.
    pub fn record(&mut self, change: Event, extra_tags: Vec<Tag>) -> Result<EntryId> {
        if !change.is_elementary() {
            return Err(Error::InvalidArgument(format!(
                "{} is not an elementary code change",
                change.kind()
            )));
        }
        self.single(change, extra_tags)
    }

    /// Codebase state right after `id`: the replay of its ancestor chain.
    pub fn state_at(&self, id: &EntryId) -> Result<Codebase> {
        let mut chain = Vec::new();
        let mut cursor = Some(id.clone());
        while let Some(current) = cursor {
            let entry = self.entry(&current)?;
            chain.push(entry);
            cursor = entry.parent.clone();
        }
        let mut codebase = Codebase::new();
        for entry in chain.into_iter().rev() {
            codebase.apply(&entry.event)?;
        }
        Ok(codebase)
    }

    /// Records an elementary change on a named side branch.
    pub fn record_on_branch(
        &mut self,
        label: &str,
        change: Event,
        mut extra_tags: Vec<Tag>,
    ) -> Result<EntryId> {
        if !change.is_elementary() {
            return Err(Error::InvalidArgument(format!(
                "{} is not an elementary code change",
                change.kind()
            )));
        }
        let head = self
            .branch_heads
            .get(label)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown branch {label:?}")))?;
        self.state_at(&head)?.apply(&change)?;
        extra_tags.push(Tag::text(TagKey::BranchLabel, label));
        let mut plan = Plan::new(self);
        plan.push_side(change, extra_tags, head);
        let id = plan.commit(self)?.remove(0);
        self.branch_heads.insert(label.to_string(), id.clone());
        Ok(id)
    }

    pub fn add_package(&mut self, name: &str) -> Result<EntryId> {
        self.record(
            Event::PackageAdded {
                def: PackageDef { name: name.into() },
            },
            Vec::new(),
        )
    }

    pub fn add_class(&mut self, def: ClassDef) -> Result<EntryId> {
        self.record(Event::ClassAdded { def }, Vec::new())
    }

    pub fn add_method(&mut self, def: MethodDef) -> Result<EntryId> {
        self.record(Event::MethodAdded { def }, Vec::new())
    }

    /// Builds the modification event for a method from its current state.
    pub fn method_modification(
        &self,
        unit: &CodeUnitRef,
        source: Option<String>,
        protocol: Option<String>,
    ) -> Result<Event> {
        let before = self.codebase.method(unit).cloned().ok_or_else(|| missing(unit))?;
        let mut after = before.clone();
        if let Some(source) = source {
            after.source = source;
        }
        if let Some(protocol) = protocol {
            after.protocol = protocol;
        }
        Ok(Event::MethodModified { before, after })
    }

    pub fn modify_method(
        &mut self,
        unit: &CodeUnitRef,
        source: Option<String>,
        protocol: Option<String>,
    ) -> Result<EntryId> {
        let event = self.method_modification(unit, source, protocol)?;
        self.record(event, Vec::new())
    }

    pub fn class_modification(
        &self,
        unit: &CodeUnitRef,
        change: impl FnOnce(&mut ClassDef),
    ) -> Result<Event> {
        let before = match self.codebase.definition(unit) {
            Some(Definition::Class(def)) => def,
            _ => return Err(missing(unit)),
        };
        let mut after = before.clone();
        change(&mut after);
        Ok(Event::ClassModified { before, after })
    }

    pub fn modify_class(
        &mut self,
        unit: &CodeUnitRef,
        change: impl FnOnce(&mut ClassDef),
    ) -> Result<EntryId> {
        let event = self.class_modification(unit, change)?;
        self.record(event, Vec::new())
    }

    /// The removal event for a unit as it currently stands.
    pub fn removal(&self, unit: &CodeUnitRef) -> Result<Event> {
        Ok(match self.codebase.definition(unit).ok_or_else(|| missing(unit))? {
            Definition::Package(def) => Event::PackageRemoved { def },
            Definition::Class(def) => Event::ClassRemoved { def },
            Definition::Method(def) => Event::MethodRemoved { def },
        })
    }

    pub fn remove(&mut self, unit: &CodeUnitRef) -> Result<EntryId> {
        let event = self.removal(unit)?;
        self.record(event, Vec::new())
    }

    // -- undo / redo -------------------------------------------------------

    fn live_target(&self, target: &EntryId) -> Result<&Entry> {
        let entry = self.entry(target)?;
        if !entry.event.is_elementary() {
            return Err(Error::NotInvertible {
                kind: entry.event.kind(),
            });
        }
        if self.log.is_side_branch(target) {
            return Err(Error::NotUndoable {
                entry: target.clone(),
                reason: "entry lives on a side branch".into(),
            });
        }
        Ok(entry)
    }

    /// Plans the inverse of `target` as children of `cause`. Undoing a
    /// class addition first removes the class's live methods.
    fn plan_inverse(&self, plan: &mut Plan, target: &Entry, cause: &EntryId) -> Result<()> {
        let not_undoable = |c: Conflict| Error::NotUndoable {
            entry: target.id.clone(),
            reason: c.to_string(),
        };
        let inverse = invert(&target.event)?;
        if let Event::ClassAdded { def } = &target.event {
            let methods: Vec<MethodDef> = plan
                .codebase
                .class(&def.package_name, &def.name)
                .filter(|c| &c.def == def)
                .map(|c| c.methods.values().cloned().collect())
                .unwrap_or_default();
            for method in methods {
                plan.push(Event::MethodRemoved { def: method }, vec![triggered_by(cause)])
                    .map_err(not_undoable)?;
            }
        }
        plan.push(inverse, vec![triggered_by(cause)])
            .map_err(not_undoable)?;
        Ok(())
    }

    fn plan_undo(&self, plan: &mut Plan, target: &EntryId, tags: Vec<Tag>) -> Result<EntryId> {
        let entry = self.live_target(target)?;
        let undo = plan
            .push(
                Event::Undo {
                    target: target.clone(),
                },
                tags,
            )
            .expect("undo entries do not touch the codebase");
        self.plan_inverse(plan, entry, &undo)?;
        Ok(undo)
    }

    /// Logs an Undo entry and its triggered inverse.
    pub fn undo(&mut self, target: &EntryId) -> Result<EntryId> {
        let mut plan = Plan::new(self);
        let undo = self.plan_undo(&mut plan, target, Vec::new())?;
        plan.commit(self)?;
        Ok(undo)
    }

    /// Plans a Redo entry plus a copy of `event` tagged redoneFrom `source`.
    /// Returns the copy's id.
    fn plan_redo(
        plan: &mut Plan,
        source: &EntryId,
        event: &Event,
        tags: Vec<Tag>,
    ) -> std::result::Result<EntryId, Conflict> {
        plan.codebase.check(event)?;
        let redo = plan
            .push(
                Event::Redo {
                    target: source.clone(),
                },
                tags,
            )
            .expect("redo entries do not touch the codebase");
        plan.push(event.clone(), vec![triggered_by(&redo), redone_from(source)])
    }

    /// Re-applies an entry of this log. Returns the id of the Redo entry.
    pub fn redo(&mut self, target: &EntryId) -> Result<EntryId> {
        let entry = self.entry(target)?;
        if !entry.event.is_elementary() {
            return Err(Error::InvalidArgument(format!(
                "{} is not an elementary code change",
                entry.event.kind()
            )));
        }
        let event = entry.event.clone();
        let mut plan = Plan::new(self);
        Self::plan_redo(&mut plan, target, &event, Vec::new())?;
        let ids = plan.commit(self)?;
        Ok(ids[0].clone())
    }

    /// Replays foreign entries one by one with redo semantics, skipping conflicts.
    fn replay_foreign(&mut self, entries: &[Entry], mode: ImportMode) -> Result<ReplayReport> {
        let mut report = ReplayReport::default();
        let mut scratch = self.codebase.clone();
        for entry in entries {
            let description = entry.event.describe();
            let status = if !entry.event.is_elementary() {
                ReplayStatus::Ignored(format!("{} is not an elementary change", entry.event.kind()))
            } else {
                match mode {
                    ImportMode::Inspect => match scratch.apply(&entry.event) {
                        Ok(()) => ReplayStatus::WouldApply,
                        Err(c) => ReplayStatus::Conflict(c),
                    },
                    ImportMode::Replay => {
                        let mut plan = Plan::new(self);
                        match Self::plan_redo(&mut plan, &entry.id, &entry.event, Vec::new()) {
                            Ok(copy) => {
                                plan.commit(self)?;
                                ReplayStatus::Applied(copy)
                            }
                            Err(c) => ReplayStatus::Conflict(c),
                        }
                    }
                }
            };
            report.outcomes.push(ReplayOutcome {
                source: entry.id.clone(),
                description,
                status,
            });
        }
        Ok(report)
    }

    /// Re-applies the changes a crashed session lost: every elementary
    /// entry logged after its last save, skipping side branches.
    pub fn recover_session(&mut self, crashed: &Log, anchor: &EntryId) -> Result<ReplayReport> {
        self.entry(anchor)?;
        let lost: Vec<Entry> = crashed
            .entries_after_last_save()
            .iter()
            .filter(|e| !crashed.is_side_branch(&e.id))
            .cloned()
            .collect();
        let elementary: Vec<Entry> = lost.into_iter().filter(|e| e.event.is_elementary()).collect();
        self.replay_foreign(&elementary, ImportMode::Replay)
    }

    // -- condense and split -------------------------------------------------

    fn history_entries(&self, unit: &CodeUnitRef) -> Vec<Entry> {
        crate::views::effective_history(&self.log, unit)
            .iter()
            .filter_map(|id| self.log.entry(id).cloned())
            .collect()
    }

    /// Drops neutralized add/remove pairs from `unit`'s history by undoing
    /// back to the oldest neutralized event and redoing the survivors.
    /// Returns the Condense entry, or `None` when no pair can be dropped
    /// without changing the codebase or lengthening the history.
    pub fn condense(&mut self, unit: &CodeUnitRef) -> Result<Option<EntryId>> {
        if !self.codebase.contains(unit) {
            return Ok(None);
        }
        let history = self.history_entries(unit);
        let groups = neutralized_groups(&history, unit);
        let Some(start) = groups.iter().filter_map(|g| g.first().copied()).min() else {
            return Ok(None);
        };
        // Pairs are matched by name, which class renames make ambiguous:
        // keep only the pairs whose removal still rebuilds the current state.
        let before = self.plan_condense(unit, &history, start)?.1;
        let mut dropped = BTreeSet::new();
        for group in &groups {
            let candidate: BTreeSet<usize> = dropped.union(group).copied().collect();
            let mut cb = before.clone();
            let rebuilds = history
                .iter()
                .enumerate()
                .skip(start)
                .filter(|(i, _)| !candidate.contains(i))
                .all(|(_, e)| cb.apply(&e.event).is_ok());
            if rebuilds && cb == self.codebase {
                dropped = candidate;
            }
        }
        let Some(&oldest) = dropped.iter().next() else {
            return Ok(None);
        };
        let (mut plan, _, condense) = self.plan_condense(unit, &history, oldest)?;
        for (i, entry) in history.iter().enumerate().skip(oldest) {
            if dropped.contains(&i) {
                continue;
            }
            Self::plan_redo(&mut plan, &entry.id, &entry.event, vec![triggered_by(&condense)])?;
        }
        // Undos across renames stay literal in views; don't log a rebuild
        // that leaves the history no shorter.
        let trial = plan.preview(&self.log)?;
        if crate::views::effective_history(&trial, unit).len() >= history.len() {
            return Ok(None);
        }
        plan.commit(self)?;
        Ok(Some(condense))
    }

    /// The Condense entry and undos of `history[oldest..]`, newest first;
    /// also returns the state those undos lead to.
    fn plan_condense(
        &self,
        unit: &CodeUnitRef,
        history: &[Entry],
        oldest: usize,
    ) -> Result<(Plan, Codebase, EntryId)> {
        let mut plan = Plan::new(self);
        let condense = plan
            .push(Event::Condense { unit: unit.clone() }, Vec::new())
            .expect("state neutral");
        for entry in history[oldest..].iter().rev() {
            let undo = plan
                .push(
                    Event::Undo {
                        target: entry.id.clone(),
                    },
                    vec![triggered_by(&condense)],
                )
                .expect("state neutral");
            self.plan_inverse(&mut plan, entry, &undo)?;
        }
        let state = plan.codebase.clone();
        Ok((plan, state, condense))
    }

    /// Moves `targets` onto side branch `label` and rebases the rest of the
    /// package history without them. Returns the Split entry and the branch head.
    pub fn split(
        &mut self,
        targets: &[EntryId],
        label: &str,
        extra_tags: Vec<Tag>,
    ) -> Result<(EntryId, EntryId)> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("split needs at least one target".into()));
        }
        if label.is_empty() {
            return Err(Error::InvalidArgument("branch label must not be empty".into()));
        }
        let mut packages = BTreeSet::new();
        for target in targets {
            let entry = self.live_target(target)?;
            for unit in entry.event.subjects() {
                packages.insert(unit.package_name().to_string());
            }
        }
        if packages.len() != 1 {
            return Err(Error::InvalidArgument(
                "split targets must lie in exactly one package".into(),
            ));
        }
        let package = CodeUnitRef::package(packages.into_iter().next().expect("one package"));
        let history = self.history_entries(&package);
        let mut positions = Vec::new();
        for target in targets {
            let pos = history.iter().position(|e| &e.id == target).ok_or_else(|| {
                Error::NotUndoable {
                    entry: target.clone(),
                    reason: format!("not live in the history of {package}"),
                }
            })?;
            positions.push(pos);
        }
        positions.sort_unstable();
        positions.dedup();
        let oldest = positions[0];
        let anchor = match self.branch_heads.get(label) {
            Some(head) => head.clone(),
            None => self.branch_anchor(&history, &positions, &package)?,
        };

        let mut branch_state = self.state_at(&anchor)?;
        let mut plan = Plan::new(self);
        let split = plan
            .push(
                Event::Split {
                    targets: positions.iter().map(|&p| history[p].id.clone()).collect(),
                    branch_label: label.to_string(),
                },
                Vec::new(),
            )
            .expect("state neutral");
        for entry in history[oldest..].iter().rev() {
            let undo = plan
                .push(
                    Event::Undo {
                        target: entry.id.clone(),
                    },
                    vec![triggered_by(&split)],
                )
                .expect("state neutral");
            self.plan_inverse(&mut plan, entry, &undo)?;
        }
        let mut branch_parent = anchor;
        for &pos in &positions {
            let entry = &history[pos];
            branch_state.apply(&entry.event)?;
            let mut tags = vec![
                triggered_by(&split),
                redone_from(&entry.id),
                Tag::text(TagKey::BranchLabel, label),
            ];
            tags.extend(extra_tags.iter().cloned());
            branch_parent = plan.push_side(entry.event.clone(), tags, branch_parent);
        }
        for (i, entry) in history.iter().enumerate().skip(oldest + 1) {
            if positions.contains(&i) {
                continue;
            }
            Self::plan_redo(&mut plan, &entry.id, &entry.event, vec![triggered_by(&split)])?;
        }
        plan.commit(self)?;
        self.branch_heads
            .insert(label.to_string(), branch_parent.clone());
        Ok((split, branch_parent))
    }

    /// Most recent commit-labelled ancestor of the oldest target that
    /// belongs to the package, else the latest creation of a unit the
    /// targets live in (at worst the package's own creation).
    fn branch_anchor(
        &self,
        history: &[Entry],
        positions: &[usize],
        package: &CodeUnitRef,
    ) -> Result<EntryId> {
        let oldest = positions[0];
        let mut cursor = history[oldest].parent.clone();
        while let Some(id) = cursor {
            let entry = self.entry(&id)?;
            if entry.tags.contains(TagKey::CommitLabel)
                && entry.event.affected_units().contains(package)
            {
                return Ok(id);
            }
            cursor = entry.parent.clone();
        }
        // (unit, whether the target needs the unit itself to exist)
        let needs: Vec<(CodeUnitRef, bool)> = positions
            .iter()
            .flat_map(|&p| {
                let event = &history[p].event;
                let existing = !event.is_addition();
                event.subjects().into_iter().map(move |s| (s, existing))
            })
            .collect();
        history[..oldest]
            .iter()
            .rposition(|e| {
                e.event.is_addition()
                    && e.event.subjects().iter().any(|u| {
                        needs
                            .iter()
                            .any(|(s, existing)| u.contains(s) && (*existing || u != s))
                    })
            })
            .or_else(|| {
                history[..oldest]
                    .iter()
                    .position(|e| matches!(e.event, Event::PackageAdded { .. }))
            })
            .map(|i| history[i].id.clone())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no branch anchor before the split targets in {package}"))
            })
    }

    // -- tags ----------------------------------------------------------------

    pub fn comment(&mut self, target: &EntryId, text: impl Into<String>) -> Result<TagAttachment> {
        self.log.attach_tag(target, Tag::comment(text))
    }

    pub fn tag(&mut self, target: &EntryId, tag: Tag) -> Result<TagAttachment> {
        if tag.key == TagKey::BranchLabel {
            return Err(Error::InvalidArgument(
                "branch labels are set when recording on a branch".into(),
            ));
        }
        self.log.attach_tag(target, tag)
    }

    // -- versions ------------------------------------------------------------

    pub fn version_file_name(package: &str, label: &str) -> String {
        format!("{package}-{label}.version")
    }

    /// Writes `<pkg>-<label>.version` into `dir`, logs SaveVersion and tags
    /// the last entry of the package's history with the commit label.
    pub fn save_version(&mut self, package: &str, label: &str, dir: &Path) -> Result<(EntryId, PathBuf)> {
        check_version_label(label)?;
        let unit = CodeUnitRef::package(package);
        if !self.codebase.contains(&unit) {
            return Err(missing(&unit));
        }
        let path = dir.join(Self::version_file_name(package, label));
        self.codebase.write_version_file(package, &path)?;
        let id = self.single(
            Event::SaveVersion {
                package_name: package.to_string(),
                version_label: label.to_string(),
            },
            Vec::new(),
        )?;
        if let Some(last) = crate::views::effective_history(&self.log, &unit).last() {
            self.log
                .attach_tag(last, Tag::commit_label(commit_label(package, label)))?;
        }
        Ok((id, path))
    }

    /// Loads a version file: LoadVersion plus one triggered addition per
    /// unit, the last one carrying the commit label.
    pub fn load_version(&mut self, path: &Path, extra_tags: Vec<Tag>) -> Result<EntryId> {
        let loaded = Codebase::read_version_file(path)?;
        let mut packages = loaded.packages();
        let (Some(pkg), None) = (packages.next(), packages.next()) else {
            return Err(Error::InvalidArgument(format!(
                "{} must hold exactly one package",
                path.display()
            )));
        };
        let name = pkg.def.name.clone();
        let label = path
            .file_name()
            .and_then(|f| f.to_str())
            .and_then(|f| f.strip_suffix(".version"))
            .and_then(|f| f.strip_prefix(&format!("{name}-")))
            .filter(|l| !l.is_empty())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "version file {} is not named {name}-<label>.version",
                    path.display()
                ))
            })?
            .to_string();
        let mut events = vec![Event::PackageAdded {
            def: pkg.def.clone(),
        }];
        for class in pkg.classes.values() {
            events.push(Event::ClassAdded {
                def: class.def.clone(),
            });
            for method in class.methods.values() {
                events.push(Event::MethodAdded {
                    def: method.clone(),
                });
            }
        }
        let mut plan = Plan::new(self);
        let load = plan
            .push(
                Event::LoadVersion {
                    package_name: name.clone(),
                    version_label: label.clone(),
                },
                extra_tags,
            )
            .expect("state neutral");
        let last = events.len() - 1;
        for (i, event) in events.into_iter().enumerate() {
            let mut tags = vec![triggered_by(&load)];
            if i == last {
                tags.push(Tag::commit_label(commit_label(&name, &label)));
            }
            plan.push(event, tags)?;
        }
        plan.commit(self)?;
        Ok(load)
    }

    // -- refactorings ------------------------------------------------------------

    fn plan_rename_method(
        &self,
        old: &CodeUnitRef,
        new_selector: &str,
        tags: Vec<Tag>,
    ) -> Result<(Plan, EntryId)> {
        let Some(selector) = old.selector() else {
            return Err(Error::InvalidArgument(format!("{old} is not a method")));
        };
        if !is_unary_selector(selector) || !is_unary_selector(new_selector) {
            return Err(Error::InvalidArgument(
                "only unary selectors can be renamed".into(),
            ));
        }
        let def = self.codebase.method(old).cloned().ok_or_else(|| missing(old))?;
        let mut renamed = def.clone();
        renamed.selector = new_selector.to_string();
        renamed.source = replace_token(&def.source, selector, new_selector);
        if self.codebase.contains(&renamed.unit()) {
            return Err(Conflict::new(ConflictKind::AlreadyExists, renamed.unit()).into());
        }
        let senders = senders_of(selector, &self.codebase);
        let mut plan = Plan::new(self);
        let rename = plan
            .push(
                Event::RenameMethod {
                    old_ref: old.clone(),
                    new_selector: new_selector.to_string(),
                },
                tags,
            )
            .expect("state neutral");
        plan.push(Event::MethodAdded { def: renamed }, vec![refactoring_of(&rename)])?;
        for sender in senders {
            let before = self.codebase.method(&sender).cloned().expect("sender exists");
            let mut after = before.clone();
            after.source = replace_token(&before.source, selector, new_selector);
            plan.push(Event::MethodModified { before, after }, vec![refactoring_of(&rename)])?;
        }
        plan.push(Event::MethodRemoved { def }, vec![refactoring_of(&rename)])?;
        Ok((plan, rename))
    }

    /// Renames a unary method and rewrites every sender.
    pub fn rename_method(&mut self, old: &CodeUnitRef, new_selector: &str) -> Result<EntryId> {
        let (plan, rename) = self.plan_rename_method(old, new_selector, Vec::new())?;
        plan.commit(self)?;
        Ok(rename)
    }

    fn plan_rename_class(
        &self,
        old: &CodeUnitRef,
        new_name: &str,
        tags: Vec<Tag>,
    ) -> Result<(Plan, EntryId)> {
        if old.kind() != UnitKind::Class {
            return Err(Error::InvalidArgument(format!("{old} is not a class")));
        }
        if !is_identifier(new_name) {
            return Err(Error::InvalidArgument(format!("bad class name {new_name:?}")));
        }
        let before = match self.codebase.definition(old) {
            Some(Definition::Class(def)) => def,
            _ => return Err(missing(old)),
        };
        let old_name = before.name.clone();
        let mut after = before.clone();
        after.name = new_name.to_string();
        if self.codebase.contains(&after.unit()) {
            return Err(Conflict::new(ConflictKind::AlreadyExists, after.unit()).into());
        }
        let mut plan = Plan::new(self);
        let rename = plan
            .push(
                Event::RenameClass {
                    old_ref: old.clone(),
                    new_name: new_name.to_string(),
                },
                tags,
            )
            .expect("state neutral");
        plan.push(Event::ClassModified { before, after }, vec![refactoring_of(&rename)])?;
        let subclasses: Vec<ClassDef> = plan
            .codebase
            .packages()
            .flat_map(|p| p.classes.values())
            .filter(|c| c.def.superclass_name == old_name && c.def.name != new_name)
            .map(|c| c.def.clone())
            .collect();
        for sub in subclasses {
            let mut changed = sub.clone();
            changed.superclass_name = new_name.to_string();
            plan.push(
                Event::ClassModified {
                    before: sub,
                    after: changed,
                },
                vec![refactoring_of(&rename)],
            )?;
        }
        for unit in references_to(&old_name, &plan.codebase) {
            let before = plan.codebase.method(&unit).cloned().expect("reference exists");
            let mut after = before.clone();
            after.source = replace_token(&before.source, &old_name, new_name);
            plan.push(Event::MethodModified { before, after }, vec![refactoring_of(&rename)])?;
        }
        Ok((plan, rename))
    }

    /// Renames a class, carrying its methods and rewriting references.
    pub fn rename_class(&mut self, old: &CodeUnitRef, new_name: &str) -> Result<EntryId> {
        let (plan, rename) = self.plan_rename_class(old, new_name, Vec::new())?;
        plan.commit(self)?;
        Ok(rename)
    }

    // -- sharing -------------------------------------------------------------------

    pub fn export_entries(&self, filter: &EntryFilter, path: &Path) -> Result<usize> {
        write_export(path, self.log.query(filter))
    }

    pub fn import_entries(&mut self, path: &Path, mode: ImportMode) -> Result<ReplayReport> {
        let entries = read_export(path)?;
        self.replay_foreign(&entries, mode)
    }

    /// Re-executes the first rename intent found in an export file against
    /// the current codebase, so local senders are found and rewritten.
    pub fn replay_refactoring(&mut self, path: &Path) -> Result<EntryId> {
        let entries = read_export(path)?;
        let intent = entries
            .iter()
            .find(|e| e.event.is_refactoring())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{} holds no refactoring intent", path.display()))
            })?;
        let tags = vec![redone_from(&intent.id)];
        let (plan, rename) = match &intent.event {
            Event::RenameMethod {
                old_ref,
                new_selector,
            } => self.plan_rename_method(old_ref, new_selector, tags)?,
            Event::RenameClass { old_ref, new_name } => {
                self.plan_rename_class(old_ref, new_name, tags)?
            }
            _ => unreachable!("filtered to refactorings"),
        };
        plan.commit(self)?;
        Ok(rename)
    }

    // -- views -----------------------------------------------------------------------

    /// Logs named by redoneFrom tags that sit next to this log on disk.
    pub fn related_logs(&self) -> Vec<Log> {
        let Some(path) = self.log.path() else {
            return Vec::new();
        };
        let names: BTreeSet<&str> = self
            .log
            .entries()
            .iter()
            .flat_map(|e| e.tags.get(TagKey::RedoneFrom))
            .filter_map(|v| v.as_entry())
            .map(|id| id.log.as_str())
            .filter(|name| *name != self.log.name())
            .collect();
        names
            .into_iter()
            .filter_map(|name| {
                let candidate = sibling_log_path(path, name);
                candidate
                    .is_file()
                    .then(|| Log::load(&candidate).ok().map(|(log, _)| log))
                    .flatten()
            })
            .collect()
    }

    pub fn view(&self, unit: &CodeUnitRef) -> View {
        let related = self.related_logs();
        let mut builder = ViewBuilder::new(&self.log);
        for log in &related {
            builder = builder.with_related(log);
        }
        builder.build(unit)
    }

    pub fn effective_history(&self, unit: &CodeUnitRef) -> Vec<EntryId> {
        crate::views::effective_history(&self.log, unit)
    }
}

fn commit_label(package: &str, label: &str) -> String {
    format!("{package} version {label}")
}

fn check_version_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(['/', '\\']) || label.contains(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!("bad version label {label:?}")));
    }
    Ok(())
}

/// Positions of neutralized events in a history: an addition whose subject
/// is later removed, the removal, and modifications of that subject in
/// between. The viewed unit's own events are never neutralized.
pub fn neutralized_positions(history: &[Entry], unit: &CodeUnitRef) -> BTreeSet<usize> {
    neutralized_groups(history, unit).into_iter().flatten().collect()
}

/// Neutralized events grouped per add/remove pair, in history order.
fn neutralized_groups(history: &[Entry], unit: &CodeUnitRef) -> Vec<BTreeSet<usize>> {
    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    for (i, entry) in history.iter().enumerate() {
        if !entry.event.is_addition() || groups.iter().any(|g| g.contains(&i)) {
            continue;
        }
        let subject = entry.event.subjects().remove(0);
        if &subject == unit {
            continue;
        }
        let mut between = Vec::new();
        for (j, later) in history.iter().enumerate().skip(i + 1) {
            let subjects = later.event.subjects();
            if !subjects.contains(&subject) {
                continue;
            }
            if later.event.is_removal() {
                groups.push([i, j].into_iter().chain(between).collect());
                break;
            }
            if later.event.is_addition() {
                break;
            }
            if subjects.len() > 1 {
                // identity change (class rename): not a plain modification
                break;
            }
            between.push(j);
        }
    }
    groups
}
