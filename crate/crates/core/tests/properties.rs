mod common;

use codelog::{
    replay_main_line, Codebase, CodeUnitRef, Definition, Error, Event, Log, UnitKind, Workspace,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn identifier() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9_]{0,6}"
}

fn unit_ref() -> impl Strategy<Value = CodeUnitRef> {
    prop_oneof![
        "[A-Za-z][A-Za-z0-9_.-]{0,6}".prop_map(CodeUnitRef::package),
        (identifier(), identifier()).prop_map(|(p, c)| CodeUnitRef::class(p, c)),
        (identifier(), identifier(), any::<bool>(), identifier())
            .prop_map(|(p, c, side, s)| CodeUnitRef::method(p, c, side, s)),
        (identifier(), identifier(), identifier(), identifier())
            .prop_map(|(p, c, a, b)| CodeUnitRef::method(p, c, false, format!("{a}:{b}:"))),
    ]
}

/// Units mentioned anywhere in the log, current or removed.
fn logged_units(log: &Log) -> Vec<CodeUnitRef> {
    let mut units: Vec<CodeUnitRef> = log
        .entries()
        .iter()
        .flat_map(|e| e.event.subjects())
        .collect();
    units.sort();
    units.dedup();
    units
}

/// The state of `unit` after replaying its effective history on top of
/// the unit's current enclosing definitions.
fn replay_history(ws: &Workspace, unit: &CodeUnitRef) -> Result<Option<Definition>, String> {
    let mut cb = Codebase::new();
    for container in unit.enclosing_chain().iter().skip(1).rev() {
        let event = match ws.codebase().definition(container) {
            Some(Definition::Package(def)) => Event::PackageAdded { def },
            Some(Definition::Class(def)) => Event::ClassAdded { def },
            _ => return Ok(None),
        };
        cb.apply(&event).map_err(|c| c.to_string())?;
    }
    for id in ws.effective_history(unit) {
        let entry = ws.log().entry(&id).ok_or("history entry missing")?;
        cb.apply(&entry.event).map_err(|c| format!("{id}: {c}"))?;
    }
    Ok(cb.definition(unit))
}

fn has_class_renames(log: &Log) -> bool {
    log.entries().iter().any(|e| match &e.event {
        Event::ClassModified { before, after } => before.name != after.name,
        _ => false,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unit_refs_round_trip_through_text(unit in unit_ref()) {
        let text = unit.to_string();
        prop_assert_eq!(text.parse::<CodeUnitRef>().unwrap(), unit);
    }

    #[test]
    fn events_round_trip_through_json(seed in any::<u64>(), steps in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cb = common::random_codebase(&mut rng, steps);
        let event = common::random_change(&mut rng, &cb);
        let json = serde_json::to_string(&event).unwrap();
        prop_assert_eq!(serde_json::from_str::<Event>(&json).unwrap(), event);
    }

    #[test]
    fn inverting_an_applied_change_restores_the_codebase(seed in any::<u64>(), steps in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cb = common::random_codebase(&mut rng, steps);
        let change = common::applicable_change(&mut rng, &cb);
        prop_assert!(common::undo_is_sound(&cb, &change));
    }

    #[test]
    fn undo_of_a_recorded_change_restores_the_codebase(seed in any::<u64>(), steps in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Workspace::in_memory("u").unwrap();
        for _ in 0..steps {
            let change = common::random_change(&mut rng, ws.codebase());
            let _ = ws.record(change, Vec::new());
        }
        let before = ws.codebase().clone();
        let change = common::applicable_change(&mut rng, ws.codebase());
        let id = ws.record(change, Vec::new()).unwrap();
        ws.undo(&id).unwrap();
        prop_assert_eq!(ws.codebase(), &before);
    }

    #[test]
    fn random_scripts_keep_the_master_invariant(seed in any::<u64>(), len in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Workspace::in_memory("w").unwrap();
        common::run_random_script(&mut ws, &mut rng, len).unwrap();
        prop_assert_eq!(&replay_main_line(ws.log()).unwrap(), ws.codebase());
    }

    #[test]
    fn effective_history_replays_to_the_current_state(seed in any::<u64>(), len in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Workspace::in_memory("h").unwrap();
        common::run_random_script(&mut ws, &mut rng, len).unwrap();
        let renamed = has_class_renames(ws.log());
        for unit in logged_units(ws.log()) {
            // after a class rename, units inside it have no addition of their own
            if renamed && unit.kind() != UnitKind::Package {
                continue;
            }
            let replayed = replay_history(&ws, &unit).map_err(|e| {
                TestCaseError::fail(format!("{unit}: {e}"))
            })?;
            if ws.codebase().contains(&unit) || unit.kind() == UnitKind::Package {
                prop_assert_eq!(replayed, ws.codebase().definition(&unit), "unit {}", unit);
            }
            if unit.kind() == UnitKind::Package {
                let mut full = Codebase::new();
                for id in ws.effective_history(&unit) {
                    full.apply(&ws.log().entry(&id).unwrap().event).unwrap();
                }
                prop_assert_eq!(full, ws.codebase().restricted_to(&unit), "package {}", unit);
            }
        }
    }

    #[test]
    fn head_path_is_the_effective_history(seed in any::<u64>(), len in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Workspace::in_memory("v").unwrap();
        common::run_random_script(&mut ws, &mut rng, len).unwrap();
        for unit in logged_units(ws.log()) {
            let view = ws.view(&unit);
            let path: Vec<_> = view.head_path().iter().map(|n| n.source.clone()).collect();
            prop_assert!(view.head_path().iter().all(|n| !n.superseded));
            prop_assert_eq!(path, ws.effective_history(&unit));
            // views are a pure function of the records
            prop_assert_eq!(ws.view(&unit), view);
        }
    }

    #[test]
    fn condense_preserves_the_codebase(seed in any::<u64>(), len in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Workspace::in_memory("c").unwrap();
        common::run_random_script(&mut ws, &mut rng, len).unwrap();
        for unit in ws.codebase().units() {
            if unit.kind() == UnitKind::Method {
                continue;
            }
            let before = ws.codebase().clone();
            let history = ws.effective_history(&unit).len();
            let log_len = ws.log().len();
            match ws.condense(&unit) {
                Ok(Some(_)) => prop_assert!(ws.effective_history(&unit).len() < history, "{}", unit),
                Ok(None) => prop_assert_eq!(ws.log().len(), log_len),
                // the net history no longer rebuilds, e.g. a rename onto a reused name
                Err(Error::NotUndoable { .. }) => prop_assert_eq!(ws.log().len(), log_len),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
            prop_assert_eq!(ws.codebase(), &before);
        }
        prop_assert_eq!(&replay_main_line(ws.log()).unwrap(), ws.codebase());
    }

    #[test]
    fn logs_reload_identically(seed in any::<u64>(), len in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.omlog");
        let (mut ws, _) = Workspace::open(&path).unwrap();
        let mut sizes = vec![std::fs::metadata(&path).unwrap().len()];
        let mut previous = std::fs::read(&path).unwrap();
        for _ in 0..len {
            let change = common::random_change(&mut rng, ws.codebase());
            if ws.record(change, Vec::new()).is_ok() {
                let now = std::fs::read(&path).unwrap();
                prop_assert!(now.starts_with(&previous));
                sizes.push(now.len() as u64);
                previous = now;
            }
        }
        let entries = ws.log().entries().to_vec();
        let records = ws.log().records().to_vec();
        drop(ws);
        let (log, report) = Log::load(&path).unwrap();
        prop_assert!(report.is_none());
        prop_assert_eq!(log.entries(), &entries[..]);
        prop_assert_eq!(log.records(), &records[..]);
        for entry in log.entries() {
            if let Some(parent) = &entry.parent {
                prop_assert!(parent.seq < entry.id.seq);
            }
        }
    }
}

/// Every structurally distinct view of up to three nodes renders differently.
#[test]
fn rendering_distinguishes_small_views() {
    use codelog::{EntryId, View, ViewNode};
    use std::collections::HashMap;

    fn node(id: usize, parent: Option<usize>, superseded: bool, desc: &str) -> ViewNode {
        let mut n = codelog::views::ViewNode::detached(EntryId::new("x", id as u64 + 1), desc);
        n.id = id;
        n.parent = parent;
        n.superseded = superseded;
        n
    }

    let descriptions = ["add A", "add B"];
    let mut seen: HashMap<String, View> = HashMap::new();
    let mut total = 0;
    for size in 1..=3usize {
        // parent choice per node: None or any earlier node
        let parent_choices: Vec<Vec<Option<usize>>> = (0..size)
            .map(|i| std::iter::once(None).chain((0..i).map(Some)).collect())
            .collect();
        let mut shapes: Vec<Vec<Option<usize>>> = vec![vec![]];
        for choices in &parent_choices {
            shapes = shapes
                .into_iter()
                .flat_map(|s| {
                    choices.iter().map(move |c| {
                        let mut s = s.clone();
                        s.push(*c);
                        s
                    })
                })
                .collect();
        }
        for shape in shapes {
            for grey_mask in 0..(1u32 << size) {
                for desc_mask in 0..(1u32 << size) {
                    for head in std::iter::once(None).chain((0..size).map(Some)) {
                        let mut nodes: Vec<ViewNode> = (0..size)
                            .map(|i| {
                                node(
                                    i,
                                    shape[i],
                                    grey_mask & (1 << i) != 0,
                                    descriptions[(desc_mask >> i & 1) as usize],
                                )
                            })
                            .collect();
                        for i in 0..size {
                            if let Some(p) = shape[i] {
                                nodes[p].children.push(i);
                            }
                        }
                        let view = View {
                            unit: CodeUnitRef::package("P"),
                            nodes,
                            head,
                        };
                        total += 1;
                        let text = view.render();
                        if let Some(other) = seen.insert(text.clone(), view.clone()) {
                            panic!("{other:?}\nand\n{view:?}\nboth render as\n{text}");
                        }
                    }
                }
            }
        }
    }
    assert!(total > 1000);
}
