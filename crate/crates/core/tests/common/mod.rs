#![allow(dead_code)]

use std::path::Path;

use codelog::cli::dispatch;
use codelog::codebase::invert;
use codelog::{ClassDef, Codebase, CodeUnitRef, EntryId, Error, Event, MethodDef, Workspace};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FIXED_AT: &str = "2014-06-30T10:00:00Z";

/// Runs one CLI line against `dir`. `{dir}` in the line expands to the directory.
/// A leading `log=<name>` word picks the log file (default `main`).
pub fn cli(dir: &Path, line: &str) -> codelog::cli::Output {
    let line = line.replace("{dir}", &dir.display().to_string());
    let mut words = shlex::split(&line).expect("balanced quotes");
    let mut log = "main".to_string();
    if let Some(name) = words.first().and_then(|w| w.strip_prefix("log=")) {
        log = name.to_string();
        words.remove(0);
    }
    let mut argv = vec![
        "codelog".to_string(),
        "--log".to_string(),
        dir.join(format!("{log}.omlog")).display().to_string(),
        "--at".to_string(),
        FIXED_AT.to_string(),
        "--author".to_string(),
        "dev".to_string(),
    ];
    argv.extend(words);
    dispatch(argv)
}

/// Runs a scenario script. Lines starting with `$ ` are recorded with their
/// output in the transcript; every line must succeed.
pub fn run_scenario(dir: &Path, script: &[&str]) -> Result<String, String> {
    let mut transcript = String::new();
    for raw in script {
        let (shown, line) = match raw.strip_prefix("$ ") {
            Some(rest) => (true, rest),
            None => (false, *raw),
        };
        let out = cli(dir, line);
        if out.code != 0 {
            return Err(format!("`{line}` exited {}: {}", out.code, out.stderr));
        }
        if shown {
            transcript.push_str(&format!("$ {line}\n{}", out.stdout));
        }
    }
    Ok(transcript)
}

pub const LOAD_AND_UNDO: &[&str] = &[
    "log=release add-package P",
    "log=release add-class P A",
    "log=release save-version P 1",
    "session start",
    "load-version {dir}/P-1.version",
    "undo :4",
    "add-class P B",
    "$ log",
    "$ view P",
    "$ view P/A",
];

pub const SESSIONS: &[&str] = &[
    "session start",
    "add-package P",
    "add-class P A",
    "session end",
    "session start",
    "add-method P/A>>m --code 'm ^1'",
    "session end",
    "session start",
    "add-method P/A>>k --code 'k ^2'",
    "$ log",
    "$ view P",
];

pub const CRASH_RECOVERY: &[&str] = &[
    "log=crashed session start",
    "log=crashed add-package P",
    "log=crashed add-class P A",
    "log=crashed save-version P 1",
    "log=crashed add-method P/A>>m --code 'm ^1'",
    "log=crashed add-method P/A>>k --code 'k ^2'",
    "$ log=crashed log",
    "$ log=crashed view P",
    "session start",
    "load-version {dir}/P-1.version",
    "$ view P",
    "recover {dir}/crashed.omlog --after :4",
    "$ log",
    "$ view P",
];

pub const UNDO_LEVELS: &[&str] = &[
    "session start",
    "add-package P",
    "add-class P A",
    "add-method P/A>>m --code 'm ^1'",
    "add-method P/A>>k --code 'k ^2'",
    "$ view P",
    "undo :4",
    "$ log",
    "$ view P",
    "$ view P/A",
    "$ view P/A>>m",
    "$ view P/A>>k",
];

pub const SPLIT_FIX: &[&str] = &[
    "log=release add-package P",
    "log=release add-class P A",
    "log=release add-method P/A>>m --code '\"retrun one\" m ^1'",
    "log=release save-version P 37",
    "session start",
    "load-version {dir}/P-37.version",
    "add-class P B",
    "add-method P/B>>x --code 'x ^1'",
    "modify-method P/A>>m --code '\"return one\" m ^1'",
    "add-method P/B>>y --code 'y ^2'",
    "add-method P/B>>z --code 'z ^3'",
    "$ view P",
    "--branch typo-fix split :8",
    "comment :18 'typo fix'",
    "$ log",
    "$ view P",
];

pub const CONDENSE: &[&str] = &[
    "session start",
    "add-package P",
    "add-class P A",
    "add-class P B",
    "add-class P C",
    "remove-class P/B",
    "$ view P",
    "condense P",
    "$ log",
    "$ view P",
];

pub const RENAME_METHOD: &[&str] = &[
    "session start",
    "add-package P",
    "add-class P A",
    "add-package Q",
    "add-class Q B",
    "add-method P/A>>m --code 'm ^42'",
    "add-method Q/B>>k --code 'k ^A new m'",
    "rename-method P/A>>m p",
    "$ log",
    "$ view P",
    "$ view Q",
    "$ view P/A>>m",
    "$ view P/A>>p",
];

pub const SCENARIOS: &[(&str, &[&str])] = &[
    ("load_and_undo", LOAD_AND_UNDO),
    ("sessions", SESSIONS),
    ("crash_recovery", CRASH_RECOVERY),
    ("undo_levels", UNDO_LEVELS),
    ("split_fix", SPLIT_FIX),
    ("condense", CONDENSE),
    ("rename_method", RENAME_METHOD),
];

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

// -- random edit scripts --------------------------------------------------

const PACKAGES: &[&str] = &["P", "Q"];
const CLASSES: &[&str] = &["A", "B", "C", "D"];
const SELECTORS: &[&str] = &["m", "k", "p", "x", "y"];

fn random_source(rng: &mut ChaCha8Rng, selector: &str) -> String {
    let mut words = vec![selector.to_string(), "^".to_string()];
    for _ in 0..rng.gen_range(0..3) {
        let token = if rng.gen_bool(0.5) {
            SELECTORS.choose(rng).unwrap().to_string()
        } else {
            CLASSES.choose(rng).unwrap().to_string()
        };
        words.push(token);
    }
    words.push(rng.gen_range(0..100).to_string());
    words.join(" ")
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> Option<&'a T> {
    items.choose(rng)
}

/// A random elementary change, usually but not always applicable.
pub fn random_change(rng: &mut ChaCha8Rng, cb: &Codebase) -> Event {
    let classes: Vec<ClassDef> = cb
        .packages()
        .flat_map(|p| p.classes.values().map(|c| c.def.clone()))
        .collect();
    let methods: Vec<MethodDef> = cb.methods().cloned().collect();
    loop {
        match rng.gen_range(0..10) {
            0 => {
                let name = *pick(rng, PACKAGES).unwrap();
                return Event::PackageAdded {
                    def: codelog::PackageDef { name: name.into() },
                };
            }
            1 | 2 => {
                let package = match cb.packages().map(|p| p.def.name.clone()).collect::<Vec<_>>() {
                    names if !names.is_empty() => pick(rng, &names).unwrap().clone(),
                    _ => pick(rng, PACKAGES).unwrap().to_string(),
                };
                let mut def = ClassDef::new(package, *pick(rng, CLASSES).unwrap());
                if rng.gen_bool(0.3) {
                    def.instance_variables = vec!["a".into()];
                }
                return Event::ClassAdded { def };
            }
            3..=5 => {
                let Some(class) = pick(rng, &classes) else { continue };
                let selector = *pick(rng, SELECTORS).unwrap();
                let def = MethodDef::new(
                    class.package_name.clone(),
                    class.name.clone(),
                    selector,
                    random_source(rng, selector),
                );
                return Event::MethodAdded { def };
            }
            6 => {
                let Some(before) = pick(rng, &methods).cloned() else { continue };
                let mut after = before.clone();
                after.source = random_source(rng, &before.selector);
                if rng.gen_bool(0.2) {
                    after.protocol = "accessing".into();
                }
                return Event::MethodModified { before, after };
            }
            7 => {
                let Some(before) = pick(rng, &classes).cloned() else { continue };
                let mut after = before.clone();
                after.instance_variables.push(format!("v{}", rng.gen_range(0..9)));
                return Event::ClassModified { before, after };
            }
            8 => {
                let Some(def) = pick(rng, &methods).cloned() else { continue };
                return Event::MethodRemoved { def };
            }
            _ => {
                if rng.gen_bool(0.5) {
                    let Some(def) = pick(rng, &classes).cloned() else { continue };
                    return Event::ClassRemoved { def };
                }
                let Some(pkg) = cb.packages().next() else { continue };
                return Event::PackageRemoved { def: pkg.def.clone() };
            }
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct ScriptStats {
    /// Per operation kind: (succeeded, refused or conflicting).
    pub by_op: std::collections::BTreeMap<&'static str, (usize, usize)>,
    pub ops: usize,
    pub succeeded: usize,
    pub conflicts: usize,
    pub refused: usize,
}

/// Operations outside the history model (storage, corruption) are bugs here.
fn classify(result: Result<(), Error>, stats: &mut ScriptStats) -> Result<(), String> {
    match result {
        Ok(()) => stats.succeeded += 1,
        Err(Error::Conflict(_)) => stats.conflicts += 1,
        Err(e) if e.is_domain() => stats.refused += 1,
        Err(e) => return Err(format!("unexpected error: {e}")),
    }
    Ok(())
}

fn elementary_main_line(ws: &Workspace) -> Vec<EntryId> {
    ws.log()
        .main_line()
        .filter(|e| e.event.is_elementary())
        .map(|e| e.id.clone())
        .collect()
}

/// Runs one random script of `len` operations drawn from
/// record/undo/redo/condense/split/rename. Every failed operation must leave
/// log and codebase untouched.
pub fn run_random_script(ws: &mut Workspace, rng: &mut ChaCha8Rng, len: usize) -> Result<ScriptStats, String> {
    let mut stats = ScriptStats::default();
    for _ in 0..len {
        stats.ops += 1;
        let before_len = ws.log().len();
        let before_cb = ws.codebase().clone();
        let roll = rng.gen_range(0..20);
        let op = match roll {
            0..=9 => "record",
            10..=12 => "undo",
            13 => "redo",
            14 | 15 => "condense",
            16 | 17 => "split",
            18 => "rename-method",
            _ => "rename-class",
        };
        let result: Result<(), Error> = match roll {
            0..=9 => {
                let change = random_change(rng, ws.codebase());
                ws.record(change, Vec::new()).map(drop)
            }
            10..=12 => {
                let entries = elementary_main_line(ws);
                let recent = &entries[entries.len().saturating_sub(8)..];
                match pick(rng, recent).cloned() {
                    Some(target) => ws.undo(&target).map(drop),
                    None => Ok(()),
                }
            }
            13 => {
                let entries = elementary_main_line(ws);
                match pick(rng, &entries).cloned() {
                    Some(target) => ws.redo(&target).map(drop),
                    None => Ok(()),
                }
            }
            14 | 15 => {
                let mut units = ws.codebase().units();
                units.retain(|u| u.kind() != codelog::UnitKind::Method || rng.gen_bool(0.3));
                match pick(rng, &units).cloned() {
                    Some(unit) => ws.condense(&unit).map(drop),
                    None => Ok(()),
                }
            }
            16 | 17 => {
                let packages: Vec<String> = ws.codebase().packages().map(|p| p.def.name.clone()).collect();
                match pick(rng, &packages).cloned() {
                    Some(p) => {
                        let history = ws.effective_history(&CodeUnitRef::package(p));
                        let candidates: Vec<EntryId> = history.into_iter().skip(1).collect();
                        let count = rng.gen_range(1..=2).min(candidates.len());
                        let targets: Vec<EntryId> =
                            candidates.choose_multiple(rng, count).cloned().collect();
                        if targets.is_empty() {
                            Ok(())
                        } else {
                            let label = if rng.gen_bool(0.5) { "side" } else { "fix" };
                            ws.split(&targets, label, Vec::new()).map(drop)
                        }
                    }
                    None => Ok(()),
                }
            }
            18 => {
                let methods: Vec<CodeUnitRef> = ws.codebase().methods().map(|m| m.unit()).collect();
                match pick(rng, &methods).cloned() {
                    Some(old) => ws.rename_method(&old, pick(rng, SELECTORS).unwrap()).map(drop),
                    None => Ok(()),
                }
            }
            _ => {
                let classes: Vec<CodeUnitRef> = ws
                    .codebase()
                    .units()
                    .into_iter()
                    .filter(|u| u.kind() == codelog::UnitKind::Class)
                    .collect();
                match pick(rng, &classes).cloned() {
                    Some(old) => ws.rename_class(&old, pick(rng, CLASSES).unwrap()).map(drop),
                    None => Ok(()),
                }
            }
        };
        let failed = result.is_err();
        let counts = stats.by_op.entry(op).or_default();
        if failed {
            counts.1 += 1;
        } else {
            counts.0 += 1;
        }
        classify(result, &mut stats)?;
        if failed && (ws.log().len() != before_len || ws.codebase() != &before_cb) {
            return Err("a refused operation changed the workspace".into());
        }
    }
    Ok(stats)
}

/// Builds a random codebase by applying random changes, skipping conflicts.
pub fn random_codebase(rng: &mut ChaCha8Rng, steps: usize) -> Codebase {
    let mut cb = Codebase::new();
    for _ in 0..steps {
        let change = random_change(rng, &cb);
        let _ = cb.apply(&change);
    }
    cb
}

/// A random change that applies to `cb`.
pub fn applicable_change(rng: &mut ChaCha8Rng, cb: &Codebase) -> Event {
    loop {
        let change = random_change(rng, cb);
        if cb.check(&change).is_ok() {
            return change;
        }
    }
}

/// apply(invert(e), apply(e, cb)) == cb
pub fn undo_is_sound(cb: &Codebase, change: &Event) -> bool {
    let mut after = cb.clone();
    if after.apply(change).is_err() {
        return false;
    }
    let Ok(inverse) = invert(change) else { return false };
    after.apply(&inverse).is_ok() && &after == cb
}
