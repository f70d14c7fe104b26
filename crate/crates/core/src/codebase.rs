//! In-memory system state mutated by elementary events.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Conflict, ConflictKind, Error, Result};
use crate::model::{ClassDef, CodeUnitRef, Definition, Event, MethodDef, PackageDef, UnitKind};

/// Method key inside a class: (class side, selector).
pub type MethodKey = (bool, String);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassState {
    pub def: ClassDef,
    pub methods: BTreeMap<MethodKey, MethodDef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackageState {
    pub def: PackageDef,
    pub classes: BTreeMap<String, ClassState>,
}

/// Packages, their classes, and their methods. Structural equality
/// (`==`) compares every definition field, sources and protocols included.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Codebase {
    packages: BTreeMap<String, PackageState>,
}

impl Codebase {
    pub fn new() -> Self {
        Codebase::default()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    pub fn packages(&self) -> impl Iterator<Item = &PackageState> {
        self.packages.values()
    }

    pub fn package(&self, name: &str) -> Option<&PackageState> {
        self.packages.get(name)
    }

    pub fn class(&self, package: &str, class: &str) -> Option<&ClassState> {
        self.packages.get(package)?.classes.get(class)
    }

    pub fn method(&self, unit: &CodeUnitRef) -> Option<&MethodDef> {
        match unit {
            CodeUnitRef::Method {
                package,
                class,
                class_side,
                selector,
            } => self
                .class(package, class)?
                .methods
                .get(&(*class_side, selector.clone())),
            _ => None,
        }
    }

    pub fn methods(&self) -> impl Iterator<Item = &MethodDef> {
        self.packages
            .values()
            .flat_map(|p| p.classes.values())
            .flat_map(|c| c.methods.values())
    }

    pub fn contains(&self, unit: &CodeUnitRef) -> bool {
        self.definition(unit).is_some()
    }

    /// Current snapshot of a unit.
    pub fn definition(&self, unit: &CodeUnitRef) -> Option<Definition> {
        match unit {
            CodeUnitRef::Package { package } => self
                .packages
                .get(package)
                .map(|p| Definition::Package(p.def.clone())),
            CodeUnitRef::Class { package, class } => self
                .class(package, class)
                .map(|c| Definition::Class(c.def.clone())),
            CodeUnitRef::Method { .. } => self.method(unit).cloned().map(Definition::Method),
        }
    }

    /// Every unit currently present, packages first, in a stable order.
    pub fn units(&self) -> Vec<CodeUnitRef> {
        let mut out = Vec::new();
        for pkg in self.packages.values() {
            out.push(CodeUnitRef::package(pkg.def.name.clone()));
            for class in pkg.classes.values() {
                out.push(class.def.unit());
                out.extend(class.methods.values().map(MethodDef::unit));
            }
        }
        out
    }

    /// The part of this codebase that lies inside `unit`.
    pub fn restricted_to(&self, unit: &CodeUnitRef) -> Codebase {
        let mut out = Codebase::new();
        let Some(pkg) = self.packages.get(unit.package_name()) else {
            return out;
        };
        let mut kept = PackageState {
            def: pkg.def.clone(),
            classes: BTreeMap::new(),
        };
        for (name, class) in &pkg.classes {
            if let Some(wanted) = unit.class_name() {
                if wanted != name {
                    continue;
                }
            }
            let mut class = class.clone();
            if let CodeUnitRef::Method {
                class_side,
                selector,
                ..
            } = unit
            {
                class
                    .methods
                    .retain(|key, _| key.0 == *class_side && &key.1 == selector);
            }
            kept.classes.insert(name.clone(), class);
        }
        out.packages.insert(pkg.def.name.clone(), kept);
        out
    }

    /// Applies an elementary change. Composite and system events leave the
    /// codebase untouched. On conflict the codebase is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), Conflict> {
        match event {
            Event::PackageAdded { def } => {
                let unit = CodeUnitRef::package(def.name.clone());
                if self.packages.contains_key(&def.name) {
                    return Err(Conflict::new(ConflictKind::AlreadyExists, unit));
                }
                self.packages.insert(
                    def.name.clone(),
                    PackageState {
                        def: def.clone(),
                        classes: BTreeMap::new(),
                    },
                );
            }
            Event::PackageRemoved { def } => {
                let unit = CodeUnitRef::package(def.name.clone());
                let pkg = self
                    .packages
                    .get(&def.name)
                    .ok_or_else(|| Conflict::new(ConflictKind::Missing, unit.clone()))?;
                if &pkg.def != def {
                    return Err(Conflict::new(ConflictKind::StaleBefore, unit));
                }
                if !pkg.classes.is_empty() {
                    return Err(Conflict::new(ConflictKind::NotEmpty, unit));
                }
                self.packages.remove(&def.name);
            }
            Event::ClassAdded { def } => {
                let pkg = self.package_mut(&def.package_name)?;
                if pkg.classes.contains_key(&def.name) {
                    return Err(Conflict::new(ConflictKind::AlreadyExists, def.unit()));
                }
                pkg.classes.insert(
                    def.name.clone(),
                    ClassState {
                        def: def.clone(),
                        methods: BTreeMap::new(),
                    },
                );
            }
            Event::ClassRemoved { def } => {
                let class = self.class_mut(&def.unit())?;
                if &class.def != def {
                    return Err(Conflict::new(ConflictKind::StaleBefore, def.unit()));
                }
                if !class.methods.is_empty() {
                    return Err(Conflict::new(ConflictKind::NotEmpty, def.unit()));
                }
                self.package_mut(&def.package_name)?.classes.remove(&def.name);
            }
            Event::ClassModified { before, after } => self.modify_class(before, after)?,
            Event::MethodAdded { def } => {
                check_method_def(def)?;
                let class = self.class_mut(&def.class_ref)?;
                let key = (def.class_side, def.selector.clone());
                if class.methods.contains_key(&key) {
                    return Err(Conflict::new(ConflictKind::AlreadyExists, def.unit()));
                }
                class.methods.insert(key, def.clone());
            }
            Event::MethodRemoved { def } => {
                check_method_def(def)?;
                let slot = self.method_slot(def)?;
                if slot != def {
                    return Err(Conflict::new(ConflictKind::StaleBefore, def.unit()));
                }
                let key = (def.class_side, def.selector.clone());
                self.class_mut(&def.class_ref)?.methods.remove(&key);
            }
            Event::MethodModified { before, after } => {
                check_method_def(before)?;
                if before.unit() != after.unit() || before.class_ref != after.class_ref {
                    return Err(Conflict::new(ConflictKind::Malformed, after.unit()));
                }
                let slot = self.method_slot(before)?;
                if slot != before {
                    return Err(Conflict::new(ConflictKind::StaleBefore, before.unit()));
                }
                *slot = after.clone();
            }
            _ => {}
        }
        Ok(())
    }

    fn modify_class(&mut self, before: &ClassDef, after: &ClassDef) -> Result<(), Conflict> {
        if before.package_name != after.package_name {
            return Err(Conflict::new(ConflictKind::Malformed, after.unit()));
        }
        let current = self.class_mut(&before.unit())?;
        if &current.def != before {
            return Err(Conflict::new(ConflictKind::StaleBefore, before.unit()));
        }
        if before.name == after.name {
            current.def = after.clone();
            return Ok(());
        }
        let pkg = self.package_mut(&before.package_name)?;
        if pkg.classes.contains_key(&after.name) {
            return Err(Conflict::new(ConflictKind::AlreadyExists, after.unit()));
        }
        let mut state = pkg.classes.remove(&before.name).expect("checked above");
        state.def = after.clone();
        let new_ref = after.unit();
        for method in state.methods.values_mut() {
            method.class_ref = new_ref.clone();
        }
        pkg.classes.insert(after.name.clone(), state);
        Ok(())
    }

    fn package_mut(&mut self, name: &str) -> Result<&mut PackageState, Conflict> {
        self.packages
            .get_mut(name)
            .ok_or_else(|| Conflict::new(ConflictKind::Missing, CodeUnitRef::package(name)))
    }

    fn class_mut(&mut self, class_ref: &CodeUnitRef) -> Result<&mut ClassState, Conflict> {
        let (package, class) = match class_ref {
            CodeUnitRef::Class { package, class } => (package, class),
            other => return Err(Conflict::new(ConflictKind::Malformed, other.clone())),
        };
        self.package_mut(package)?
            .classes
            .get_mut(class)
            .ok_or_else(|| Conflict::new(ConflictKind::Missing, class_ref.clone()))
    }

    fn method_slot(&mut self, def: &MethodDef) -> Result<&mut MethodDef, Conflict> {
        let key = (def.class_side, def.selector.clone());
        self.class_mut(&def.class_ref)?
            .methods
            .get_mut(&key)
            .ok_or_else(|| Conflict::new(ConflictKind::Missing, def.unit()))
    }

    /// Folds `apply` over a sequence starting from this state.
    pub fn apply_all<'a>(&mut self, events: impl IntoIterator<Item = &'a Event>) -> Result<(), Conflict> {
        for event in events {
            self.apply(event)?;
        }
        Ok(())
    }

    /// Checks applicability without mutating.
    pub fn check(&self, event: &Event) -> Result<(), Conflict> {
        self.clone().apply(event)
    }
}

fn check_method_def(def: &MethodDef) -> Result<(), Conflict> {
    if def.class_ref.kind() != UnitKind::Class {
        return Err(Conflict::new(ConflictKind::Malformed, def.class_ref.clone()));
    }
    Ok(())
}

/// The event that reverts an elementary change. Needs no codebase.
pub fn invert(event: &Event) -> Result<Event> {
    Ok(match event {
        Event::PackageAdded { def } => Event::PackageRemoved { def: def.clone() },
        Event::PackageRemoved { def } => Event::PackageAdded { def: def.clone() },
        Event::ClassAdded { def } => Event::ClassRemoved { def: def.clone() },
        Event::ClassRemoved { def } => Event::ClassAdded { def: def.clone() },
        Event::ClassModified { before, after } => Event::ClassModified {
            before: after.clone(),
            after: before.clone(),
        },
        Event::MethodAdded { def } => Event::MethodRemoved { def: def.clone() },
        Event::MethodRemoved { def } => Event::MethodAdded { def: def.clone() },
        Event::MethodModified { before, after } => Event::MethodModified {
            before: after.clone(),
            after: before.clone(),
        },
        other => return Err(Error::NotInvertible { kind: other.kind() }),
    })
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Byte ranges of maximal identifier runs in `source`.
fn identifier_tokens(source: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in source.char_indices() {
        match (is_ident_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push((s, &source[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, &source[s..]));
    }
    tokens.into_iter()
}

/// True when `token` occurs in `source` delimited by non-identifier characters.
pub fn contains_token(source: &str, token: &str) -> bool {
    identifier_tokens(source).any(|(_, t)| t == token)
}

/// Replaces every standalone occurrence of `old` with `new`.
pub fn replace_token(source: &str, old: &str, new: &str) -> String {
    let mut out = String::with_capacity(source.len());
    let mut last = 0;
    for (start, token) in identifier_tokens(source) {
        if token == old {
            out.push_str(&source[last..start]);
            out.push_str(new);
            last = start + token.len();
        }
    }
    out.push_str(&source[last..]);
    out
}

/// Methods whose source sends `selector`, excluding methods named `selector`.
pub fn senders_of(selector: &str, codebase: &Codebase) -> BTreeSet<CodeUnitRef> {
    codebase
        .methods()
        .filter(|m| m.selector != selector && contains_token(&m.source, selector))
        .map(MethodDef::unit)
        .collect()
}

/// Methods whose source mentions `name` as a standalone token.
pub fn references_to(name: &str, codebase: &Codebase) -> BTreeSet<CodeUnitRef> {
    codebase
        .methods()
        .filter(|m| contains_token(&m.source, name))
        .map(MethodDef::unit)
        .collect()
}

// ---------------------------------------------------------------------------
// Checkout format
//
//   <pkg>/.package                       package manifest
//   <pkg>/<class>.class                  class manifest
//   <pkg>/<class>/<side>/<selector>.st   protocol line, blank line, source
// ---------------------------------------------------------------------------

const PACKAGE_MANIFEST: &str = ".package";

fn side_dir(class_side: bool) -> &'static str {
    if class_side {
        "class"
    } else {
        "instance"
    }
}

fn class_manifest(def: &ClassDef) -> String {
    format!(
        "name: {}\npackage: {}\nsuperclass: {}\ninstanceVariables: {}\ncomment:\n{}",
        def.name,
        def.package_name,
        def.superclass_name,
        def.instance_variables.join(" "),
        def.comment
    )
}

fn corrupt(path: &str, message: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("bad checkout file {path}: {}", message.into()))
}

fn parse_class_manifest(path: &str, text: &str) -> Result<ClassDef> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut rest = text;
    loop {
        let (line, tail) = rest.split_once('\n').ok_or_else(|| corrupt(path, "missing comment"))?;
        if line == "comment:" {
            rest = tail;
            break;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| corrupt(path, format!("bad line {line:?}")))?;
        fields.insert(key, value.strip_prefix(' ').unwrap_or(value));
        rest = tail;
    }
    let field = |k: &str| {
        fields
            .get(k)
            .map(|v| v.to_string())
            .ok_or_else(|| corrupt(path, format!("missing {k}")))
    };
    Ok(ClassDef {
        name: field("name")?,
        package_name: field("package")?,
        superclass_name: field("superclass")?,
        instance_variables: field("instanceVariables")?
            .split_whitespace()
            .map(str::to_string)
            .collect(),
        comment: rest.to_string(),
    })
}

fn method_file(def: &MethodDef) -> String {
    format!("{}\n\n{}", def.protocol, def.source)
}

impl Codebase {
    /// Files making up the checkout of one package, as (relative path, contents).
    pub fn checkout_files(&self, package: &str) -> Option<Vec<(String, String)>> {
        let pkg = self.packages.get(package)?;
        let mut files = vec![(
            format!("{package}/{PACKAGE_MANIFEST}"),
            format!("name: {}\n", pkg.def.name),
        )];
        for class in pkg.classes.values() {
            let name = &class.def.name;
            files.push((format!("{package}/{name}.class"), class_manifest(&class.def)));
            for method in class.methods.values() {
                files.push((
                    format!(
                        "{package}/{name}/{}/{}.st",
                        side_dir(method.class_side),
                        method.selector
                    ),
                    method_file(method),
                ));
            }
        }
        Some(files)
    }

    /// Rebuilds packages from checkout files. Paths outside the layout are rejected.
    pub fn from_checkout_files<'a>(
        files: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Codebase> {
        let mut packages: BTreeMap<String, PackageDef> = BTreeMap::new();
        let mut classes: Vec<ClassDef> = Vec::new();
        let mut methods: Vec<MethodDef> = Vec::new();
        for (path, text) in files {
            let parts: Vec<&str> = path.split('/').collect();
            match parts.as_slice() {
                [pkg, manifest] if *manifest == PACKAGE_MANIFEST => {
                    let name = text
                        .trim_end()
                        .strip_prefix("name: ")
                        .ok_or_else(|| corrupt(path, "bad package manifest"))?;
                    if name != *pkg {
                        return Err(corrupt(path, "package name does not match directory"));
                    }
                    packages.insert(name.to_string(), PackageDef { name: name.to_string() });
                }
                [pkg, file] if file.ends_with(".class") => {
                    let def = parse_class_manifest(path, text)?;
                    if def.package_name != *pkg || format!("{}.class", def.name) != *file {
                        return Err(corrupt(path, "class manifest does not match its path"));
                    }
                    classes.push(def);
                }
                [pkg, class, side, file] => {
                    let class_side = match *side {
                        "instance" => false,
                        "class" => true,
                        _ => return Err(corrupt(path, "unknown side directory")),
                    };
                    let selector = file
                        .strip_suffix(".st")
                        .ok_or_else(|| corrupt(path, "method files end in .st"))?;
                    let (protocol, source) = text
                        .split_once("\n\n")
                        .ok_or_else(|| corrupt(path, "missing blank line after protocol"))?;
                    methods.push(MethodDef {
                        class_ref: CodeUnitRef::class(*pkg, *class),
                        class_side,
                        selector: selector.to_string(),
                        protocol: protocol.to_string(),
                        source: source.to_string(),
                    });
                }
                _ => return Err(corrupt(path, "unexpected path")),
            }
        }
        let mut codebase = Codebase::new();
        for def in packages.into_values() {
            codebase.apply(&Event::PackageAdded { def })?;
        }
        for def in classes {
            codebase.apply(&Event::ClassAdded { def })?;
        }
        for def in methods {
            codebase.apply(&Event::MethodAdded { def })?;
        }
        Ok(codebase)
    }

    /// Writes the checkout of `package` under `dir`.
    pub fn dump_package(&self, package: &str, dir: &Path) -> Result<()> {
        let files = self
            .checkout_files(package)
            .ok_or_else(|| Conflict::new(ConflictKind::Missing, CodeUnitRef::package(package)))?;
        for (rel, text) in files {
            let path = dir.join(&rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        Ok(())
    }

    /// Loads every package checked out under `dir`.
    pub fn load_checkout(dir: &Path) -> Result<Codebase> {
        let mut files = Vec::new();
        collect_files(dir, dir, &mut files)?;
        files.sort();
        Codebase::from_checkout_files(files.iter().map(|(p, t)| (p.as_str(), t.as_str())))
    }

    /// Archives the checkout of `package` as a single tar file.
    pub fn write_version_file(&self, package: &str, path: &Path) -> Result<()> {
        let files = self
            .checkout_files(package)
            .ok_or_else(|| Conflict::new(ConflictKind::Missing, CodeUnitRef::package(package)))?;
        let mut builder = tar::Builder::new(Vec::new());
        for (rel, text) in files {
            let mut header = tar::Header::new_ustar();
            header.set_size(text.len() as u64);
            header.set_mode(0o644);
            header.set_mtime(0);
            header.set_entry_type(tar::EntryType::Regular);
            builder.append_data(&mut header, rel, text.as_bytes())?;
        }
        let bytes = builder.into_inner()?;
        let mut file = fs::File::create(path)?;
        std::io::Write::write_all(&mut file, &bytes)?;
        file.sync_all()?;
        Ok(())
    }

    /// Reads a version archive back into a codebase holding its package(s).
    pub fn read_version_file(path: &Path) -> Result<Codebase> {
        let file = fs::File::open(path)?;
        let mut archive = tar::Archive::new(file);
        let mut files = Vec::new();
        for entry in archive.entries()? {
            let mut entry = entry?;
            if entry.header().entry_type() != tar::EntryType::Regular {
                continue;
            }
            let rel = entry.path()?.to_string_lossy().into_owned();
            let mut text = String::new();
            entry
                .read_to_string(&mut text)
                .map_err(|e| corrupt(&rel, e.to_string()))?;
            files.push((rel, text));
        }
        Codebase::from_checkout_files(files.iter().map(|(p, t)| (p.as_str(), t.as_str())))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walked from root")
                .to_string_lossy()
                .replace('\\', "/");
            out.push((rel, fs::read_to_string(&path)?));
        }
    }
    Ok(())
}
