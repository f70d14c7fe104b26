//! Git-style command line over one workspace.
//!
//! Exit status: 0 on success, 1 when the operation is refused by the
//! history model (conflicts, unknown entries, bad arguments), 2 on usage
//! errors, 3 when the log itself cannot be used (locked, corrupt, I/O).

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{ImportMode, ReplayReport, ReplayStatus, Workspace};
use crate::error::{Error, Result};
use crate::log::{Clock, Entry, EntryFilter, Log};
use crate::model::{ClassDef, CodeUnitRef, EntryId, MethodDef, Tag, TagKey, UnitKind};

pub const DEFAULT_LOG: &str = "history.omlog";

/// Result of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Parser, Debug)]
#[command(name = "codelog", version, about = "Semantic change log for a class-based codebase")]
struct Cli {
    /// Log file to operate on
    #[arg(long, global = true, value_name = "PATH")]
    log: Option<PathBuf>,
    /// Author recorded on new entries
    #[arg(long, global = true)]
    author: Option<String>,
    /// Record on (or split to) the named side branch
    #[arg(long, global = true, value_name = "LABEL")]
    branch: Option<String>,
    /// Fixed RFC 3339 timestamp for new entries
    #[arg(long, global = true, hide = true, value_name = "TIMESTAMP")]
    at: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create the log file if it does not exist
    Init,
    /// Record a session boundary
    Session {
        #[command(subcommand)]
        action: SessionAction,
    },
    /// Record a new package
    AddPackage {
        package: String,
    },
    /// Record a new class
    AddClass {
        package: String,
        class: String,
        #[arg(long = "super", value_name = "CLASS", default_value = "Object")]
        superclass: String,
        /// Comma-separated instance variable names
        #[arg(long, value_name = "a,b")]
        ivars: Option<String>,
        #[arg(long)]
        comment: Option<String>,
    },
    /// Record a new method, e.g. P/A>>m
    AddMethod {
        method: CodeUnitRef,
        #[command(flatten)]
        body: Body,
        #[arg(long)]
        protocol: Option<String>,
    },
    /// Record a new source or protocol for a method
    ModifyMethod {
        method: CodeUnitRef,
        #[command(flatten)]
        body: Body,
        #[arg(long)]
        protocol: Option<String>,
    },
    /// Record a class definition change
    ModifyClass {
        class: CodeUnitRef,
        #[arg(long = "super", value_name = "CLASS")]
        superclass: Option<String>,
        #[arg(long, value_name = "a,b")]
        ivars: Option<String>,
        #[arg(long)]
        comment: Option<String>,
    },
    /// Remove an empty package
    RemovePackage {
        package: String,
    },
    /// Remove a class without methods
    RemoveClass {
        class: CodeUnitRef,
    },
    /// Remove a method
    RemoveMethod {
        method: CodeUnitRef,
    },
    /// Record an evaluated expression (not executed)
    Eval {
        text: String,
    },
    /// List entries, indented by trigger depth
    Log {
        #[command(flatten)]
        filter: FilterArgs,
        /// Also show author and timestamp
        #[arg(long)]
        verbose: bool,
    },
    /// Render the history tree of a code unit
    View {
        unit: CodeUnitRef,
        /// Show the entry id behind each node
        #[arg(long)]
        ids: bool,
    },
    /// Print the current definitions
    Show {
        unit: Option<CodeUnitRef>,
    },
    /// Revert an entry by logging its inverse
    Undo {
        id: String,
    },
    /// Re-apply an entry as a new copy
    Redo {
        id: String,
    },
    /// Drop add/remove pairs from a unit's history
    Condense {
        unit: CodeUnitRef,
    },
    /// Move entries onto the side branch given by --branch
    Split {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Attach a comment to an entry
    Comment {
        id: String,
        text: String,
    },
    /// Attach KEY=VALUE to an entry
    Tag {
        id: String,
        #[arg(value_name = "KEY=VALUE", value_parser = parse_pair)]
        pair: (String, String),
    },
    /// Write PACKAGE-LABEL.version and label the history
    SaveVersion {
        package: String,
        label: String,
        /// Directory for the version file (default: next to the log)
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Load a version file as triggered additions
    LoadVersion {
        file: PathBuf,
    },
    /// Redo what a crashed session lost after its last save
    Recover {
        crashed: PathBuf,
        #[arg(long, value_name = "ID")]
        after: String,
    },
    /// Write matching entries to a file
    Export {
        #[command(flatten)]
        filter: FilterArgs,
        file: PathBuf,
    },
    /// Replay exported entries, skipping conflicts
    Import {
        file: PathBuf,
        /// Only report what would happen
        #[arg(long)]
        inspect: bool,
    },
    /// Rename a unary method and update its senders
    RenameMethod {
        method: CodeUnitRef,
        selector: String,
    },
    /// Rename a class and update references to it
    RenameClass {
        class: CodeUnitRef,
        name: String,
    },
    /// Re-execute a rename exported from another log
    ReplayRefactoring {
        file: PathBuf,
    },
    /// Run commands line by line from a file (or - for stdin) in one process
    Script {
        file: String,
    },
}

#[derive(Subcommand, Debug)]
enum SessionAction {
    Start,
    Save {
        #[arg(long)]
        label: Option<String>,
    },
    End,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Body {
    /// Source file, or - for stdin
    #[arg(long, value_name = "FILE")]
    source: Option<String>,
    /// Inline source text
    #[arg(long, value_name = "TEXT")]
    code: Option<String>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    unit: Option<CodeUnitRef>,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    /// Event kind, e.g. MethodAdded (case-insensitive)
    #[arg(long)]
    kind: Option<String>,
    /// Only entries carrying this tag key
    #[arg(long)]
    tag: Option<TagKey>,
}

struct Settings {
    log: PathBuf,
    author: Option<String>,
    branch: Option<String>,
    clock: Clock,
}

impl Settings {
    fn from_cli(cli: &Cli) -> Result<Settings> {
        Ok(Settings {
            log: cli.log.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_LOG)),
            author: cli.author.clone(),
            branch: cli.branch.clone(),
            clock: match &cli.at {
                Some(at) => Clock::parse_fixed(at)?,
                None => Clock::System,
            },
        })
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_domain() {
        1
    } else {
        3
    }
}

/// Parses and runs one command line (`argv[0]` is the program name).
pub fn dispatch<I, T>(argv: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(err) => {
            let mut out = usage(err);
            if out.code == 2 && !out.stderr.contains("Usage:") {
                out.stderr.push_str(&verb_synopsis(&argv));
            }
            return out;
        }
    };
    if matches!(cli.command, Command::Split { .. }) && cli.branch.is_none() {
        use clap::CommandFactory;
        let mut command = Cli::command();
        let err = command
            .find_subcommand_mut("split")
            .expect("split verb")
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "split needs --branch <label>",
            );
        return usage(err);
    }
    let mut out = Output::default();
    match run(cli, &mut out) {
        Ok(()) => {}
        Err(err) => {
            let _ = writeln!(out.stderr, "error: {err}");
            out.code = exit_code(&err);
        }
    }
    out
}

/// Usage line of the first verb named in `argv`, or of the whole tool.
fn verb_synopsis(argv: &[std::ffi::OsString]) -> String {
    use clap::CommandFactory;
    let mut command = Cli::command();
    command.build();
    let verb = argv
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| command.find_subcommand(a).is_some())
        .map(str::to_string);
    let usage = match verb {
        Some(verb) => command
            .find_subcommand_mut(&verb)
            .expect("verb")
            .render_usage(),
        None => command.render_usage(),
    };
    format!("\n{usage}\n")
}

fn parse_pair(text: &str) -> std::result::Result<(String, String), String> {
    text.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {text:?}"))
}

fn usage(err: clap::Error) -> Output {
    use clap::error::ErrorKind;
    let text = err.render().to_string();
    match err.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Output {
            code: 0,
            stdout: text,
            stderr: String::new(),
        },
        _ => Output {
            code: 2,
            stdout: String::new(),
            stderr: text,
        },
    }
}

fn is_read_only(command: &Command) -> bool {
    matches!(
        command,
        Command::Log { .. } | Command::View { .. } | Command::Show { .. } | Command::Export { .. }
    )
}

fn run(cli: Cli, out: &mut Output) -> Result<()> {
    let settings = Settings::from_cli(&cli)?;
    if let Command::Script { file } = &cli.command {
        return run_script(&settings, file, out);
    }
    let mut ws = open_workspace(&settings, &cli.command, out)?;
    execute(&mut ws, &settings, cli.command, out)
}

fn open_workspace(settings: &Settings, command: &Command, out: &mut Output) -> Result<Workspace> {
    let (mut ws, report) = if is_read_only(command) {
        if !settings.log.exists() {
            let name = settings
                .log
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("history");
            (Workspace::in_memory(name)?, None)
        } else {
            let (log, report) = Log::load(&settings.log)?;
            (Workspace::from_log(log)?, report)
        }
    } else {
        Workspace::open(&settings.log)?
    };
    if let Some(report) = report {
        let _ = writeln!(
            out.stderr,
            "warning: dropped {} bytes of an incomplete final record",
            report.dropped_bytes
        );
    }
    if let Some(author) = &settings.author {
        ws.set_author(author.clone())?;
    }
    ws.set_clock(settings.clock.clone());
    Ok(ws)
}

/// Runs a script in one process, sharing the workspace (and its lock).
/// Each line is flushed as it completes; blank lines and `#` comments are skipped.
fn run_script(settings: &Settings, file: &str, out: &mut Output) -> Result<()> {
    let reader: Box<dyn BufRead> = if file == "-" {
        Box::new(std::io::BufReader::new(std::io::stdin()))
    } else {
        Box::new(std::io::BufReader::new(std::fs::File::open(file)?))
    };
    let streaming = file == "-";
    let mut ws: Option<Workspace> = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let words = shlex::split(trimmed).ok_or_else(|| {
            Error::InvalidArgument(format!("line {}: unbalanced quotes", n + 1))
        })?;
        let cli = Cli::try_parse_from(std::iter::once("codelog".to_string()).chain(words))
            .map_err(|e| Error::InvalidArgument(format!("line {}: {}", n + 1, e.render())))?;
        if matches!(cli.command, Command::Script { .. }) {
            return Err(Error::InvalidArgument("scripts cannot nest".into()));
        }
        let mut line_settings = Settings::from_cli(&cli)?;
        line_settings.log = settings.log.clone();
        line_settings.author = line_settings.author.or_else(|| settings.author.clone());
        if cli.at.is_none() {
            line_settings.clock = settings.clock.clone();
        }
        if line_settings.branch.is_none() {
            line_settings.branch = settings.branch.clone();
        }
        let workspace = match &mut ws {
            Some(ws) => ws,
            None => ws.insert(open_workspace(settings, &Command::Init, out)?),
        };
        if let Some(author) = &line_settings.author {
            workspace.set_author(author.clone())?;
        }
        workspace.set_clock(line_settings.clock.clone());
        let mut line_out = Output::default();
        let result = execute(workspace, &line_settings, cli.command, &mut line_out);
        if streaming {
            print!("{}", line_out.stdout);
            eprint!("{}", line_out.stderr);
            let _ = std::io::stdout().flush();
        } else {
            out.stdout.push_str(&line_out.stdout);
            out.stderr.push_str(&line_out.stderr);
        }
        result.map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::InvalidArgument(format!("line {}: {msg}", n + 1)),
            other => other,
        })?;
    }
    Ok(())
}

/// Accepts `log:seq` or the short form `:seq` against the current log.
/// Parses an entry id; `:N` is short for entry N of `log`.
pub fn resolve_id(log: &Log, text: &str) -> Result<EntryId> {
    if let Some(seq) = text.strip_prefix(':') {
        let seq: u64 = seq
            .parse()
            .ok()
            .filter(|&s| s > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("bad entry id {text:?}")))?;
        return Ok(EntryId::new(log.name(), seq));
    }
    text.parse()
}

fn resolve_seq(log: &Log, text: &str) -> Result<u64> {
    let id = resolve_id(log, text)?;
    if id.log != log.name() {
        return Err(Error::InvalidArgument(format!("{id} is not in log {}", log.name())));
    }
    Ok(id.seq)
}

fn filter_from(log: &Log, args: FilterArgs) -> Result<EntryFilter> {
    Ok(EntryFilter {
        unit: args.unit,
        from: args.from.map(|f| resolve_seq(log, &f)).transpose()?,
        to: args.to.map(|t| resolve_seq(log, &t)).transpose()?,
        kind: args.kind,
        tag: args.tag,
    })
}

fn read_body(body: Body) -> Result<String> {
    if let Some(code) = body.code {
        return Ok(code);
    }
    match body.source.as_deref() {
        Some("-") => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            Ok(text)
        }
        Some(path) => Ok(std::fs::read_to_string(path)?),
        None => Err(Error::InvalidArgument("missing method source".into())),
    }
}

fn split_ivars(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn expect_kind(unit: &CodeUnitRef, kind: UnitKind) -> Result<()> {
    if unit.kind() != kind {
        return Err(Error::InvalidArgument(format!("{unit} is not a {kind:?}").to_lowercase()));
    }
    Ok(())
}

fn record(
    ws: &mut Workspace,
    settings: &Settings,
    change: crate::model::Event,
    out: &mut Output,
) -> Result<()> {
    let id = match &settings.branch {
        Some(label) => ws.record_on_branch(label, change, Vec::new())?,
        None => ws.record(change, Vec::new())?,
    };
    report_entry(ws, &id, out);
    Ok(())
}

fn report_entry(ws: &Workspace, id: &EntryId, out: &mut Output) {
    if let Some(entry) = ws.log().entry(id) {
        let _ = writeln!(out.stdout, "{} {}", entry.id, entry.event.describe());
    }
}

fn no_branch(settings: &Settings, verb: &str) -> Result<()> {
    if settings.branch.is_some() {
        return Err(Error::InvalidArgument(format!("{verb} does not take --branch")));
    }
    Ok(())
}

fn execute(ws: &mut Workspace, settings: &Settings, command: Command, out: &mut Output) -> Result<()> {
    use crate::model::Event;
    match command {
        Command::Init => {
            let _ = writeln!(out.stdout, "log {} ready ({} entries)", ws.log().name(), ws.log().len());
        }
        Command::Session { action } => {
            no_branch(settings, "session")?;
            let id = match action {
                SessionAction::Start => ws.session_start()?,
                SessionAction::Save { label } => ws.session_save(label)?,
                SessionAction::End => ws.session_end()?,
            };
            report_entry(ws, &id, out);
        }
        Command::AddPackage { package } => {
            let event = Event::PackageAdded {
                def: crate::model::PackageDef { name: package },
            };
            record(ws, settings, event, out)?;
        }
        Command::AddClass {
            package,
            class,
            superclass,
            ivars,
            comment,
        } => {
            let mut def = ClassDef::new(package, class);
            def.superclass_name = superclass;
            def.instance_variables = ivars.as_deref().map(split_ivars).unwrap_or_default();
            def.comment = comment.unwrap_or_default();
            record(ws, settings, Event::ClassAdded { def }, out)?;
        }
        Command::AddMethod {
            method,
            body,
            protocol,
        } => {
            expect_kind(&method, UnitKind::Method)?;
            let source = read_body(body)?;
            let mut def = MethodDef::new(
                method.package_name(),
                method.class_name().expect("method ref"),
                method.selector().expect("method ref"),
                source,
            );
            def.class_side = method.is_class_side();
            if let Some(protocol) = protocol {
                def.protocol = protocol;
            }
            record(ws, settings, Event::MethodAdded { def }, out)?;
        }
        Command::ModifyMethod {
            method,
            body,
            protocol,
        } => {
            expect_kind(&method, UnitKind::Method)?;
            let source = read_body(body)?;
            let event = match &settings.branch {
                Some(label) => branch_method_modification(ws, label, &method, source, protocol)?,
                None => ws.method_modification(&method, Some(source), protocol)?,
            };
            record(ws, settings, event, out)?;
        }
        Command::ModifyClass {
            class,
            superclass,
            ivars,
            comment,
        } => {
            expect_kind(&class, UnitKind::Class)?;
            if superclass.is_none() && ivars.is_none() && comment.is_none() {
                return Err(Error::InvalidArgument("nothing to modify".into()));
            }
            let event = ws.class_modification(&class, |def| {
                if let Some(s) = superclass {
                    def.superclass_name = s;
                }
                if let Some(v) = ivars {
                    def.instance_variables = split_ivars(&v);
                }
                if let Some(c) = comment {
                    def.comment = c;
                }
            })?;
            record(ws, settings, event, out)?;
        }
        Command::RemovePackage { package } => {
            let event = ws.removal(&CodeUnitRef::package(package))?;
            record(ws, settings, event, out)?;
        }
        Command::RemoveClass { class: unit } | Command::RemoveMethod { method: unit } => {
            let event = ws.removal(&unit)?;
            record(ws, settings, event, out)?;
        }
        Command::Eval { text } => {
            no_branch(settings, "eval")?;
            let id = ws.evaluate(text)?;
            report_entry(ws, &id, out);
        }
        Command::Log { filter, verbose } => {
            let filter = filter_from(ws.log(), filter)?;
            out.stdout.push_str(&render_log(ws.log(), &filter, verbose));
        }
        Command::View { unit, ids } => {
            let view = ws.view(&unit);
            let text = view.render();
            if ids {
                for (line, node) in text.lines().zip(&view.nodes) {
                    let _ = writeln!(out.stdout, "{line}  ({})", node.source);
                }
            } else {
                out.stdout.push_str(&text);
            }
        }
        Command::Show { unit } => {
            out.stdout.push_str(&render_definitions(ws, unit.as_ref())?);
        }
        Command::Undo { id } => {
            no_branch(settings, "undo")?;
            let target = resolve_id(ws.log(), &id)?;
            let undo = ws.undo(&target)?;
            report_group(ws, &undo, out);
        }
        Command::Redo { id } => {
            no_branch(settings, "redo")?;
            let target = resolve_id(ws.log(), &id)?;
            let redo = ws.redo(&target)?;
            report_group(ws, &redo, out);
        }
        Command::Condense { unit } => {
            no_branch(settings, "condense")?;
            match ws.condense(&unit)? {
                Some(id) => report_group(ws, &id, out),
                None => {
                    let _ = writeln!(out.stdout, "nothing to condense in {unit}");
                }
            }
        }
        Command::Split { ids } => {
            let label = settings
                .branch
                .clone()
                .ok_or_else(|| Error::InvalidArgument("split needs --branch <label>".into()))?;
            let targets = ids
                .iter()
                .map(|id| resolve_id(ws.log(), id))
                .collect::<Result<Vec<_>>>()?;
            let (split, head) = ws.split(&targets, &label, Vec::new())?;
            report_group(ws, &split, out);
            let _ = writeln!(out.stdout, "branch {label} at {head}");
        }
        Command::Comment { id, text } => {
            let target = resolve_id(ws.log(), &id)?;
            ws.comment(&target, text)?;
            let _ = writeln!(out.stdout, "commented {target}");
        }
        Command::Tag {
            id,
            pair: (key, value),
        } => {
            let target = resolve_id(ws.log(), &id)?;
            let tag = Tag::parse_pair(&key, &value)?;
            ws.tag(&target, tag)?;
            let _ = writeln!(out.stdout, "tagged {target} {key}");
        }
        Command::SaveVersion {
            package,
            label,
            dir,
        } => {
            no_branch(settings, "save-version")?;
            let dir = dir.unwrap_or_else(|| log_dir(&settings.log));
            let (id, path) = ws.save_version(&package, &label, &dir)?;
            report_entry(ws, &id, out);
            let _ = writeln!(out.stdout, "wrote {}", path.display());
        }
        Command::LoadVersion { file } => {
            no_branch(settings, "load-version")?;
            let id = ws.load_version(&file, Vec::new())?;
            report_group(ws, &id, out);
        }
        Command::Recover { crashed, after } => {
            no_branch(settings, "recover")?;
            let anchor = resolve_id(ws.log(), &after)?;
            let (crashed_log, report) = Log::load(&crashed)?;
            if let Some(report) = report {
                let _ = writeln!(
                    out.stderr,
                    "warning: crashed log lost {} bytes of an incomplete record",
                    report.dropped_bytes
                );
            }
            let report = ws.recover_session(&crashed_log, &anchor)?;
            out.stdout.push_str(&render_report(&report));
        }
        Command::Export { filter, file } => {
            let filter = filter_from(ws.log(), filter)?;
            let count = ws.export_entries(&filter, &file)?;
            let _ = writeln!(out.stdout, "exported {count} entries to {}", file.display());
        }
        Command::Import { file, inspect } => {
            no_branch(settings, "import")?;
            let mode = if inspect {
                ImportMode::Inspect
            } else {
                ImportMode::Replay
            };
            let report = ws.import_entries(&file, mode)?;
            out.stdout.push_str(&render_report(&report));
        }
        Command::RenameMethod { method, selector } => {
            no_branch(settings, "rename-method")?;
            let id = ws.rename_method(&method, &selector)?;
            report_group(ws, &id, out);
        }
        Command::RenameClass { class, name } => {
            no_branch(settings, "rename-class")?;
            let id = ws.rename_class(&class, &name)?;
            report_group(ws, &id, out);
        }
        Command::ReplayRefactoring { file } => {
            no_branch(settings, "replay-refactoring")?;
            let id = ws.replay_refactoring(&file)?;
            report_group(ws, &id, out);
        }
        Command::Script { .. } => {
            return Err(Error::InvalidArgument("scripts cannot nest".into()));
        }
    }
    Ok(())
}

/// The method's state on a branch head, for modifications recorded there.
fn branch_method_modification(
    ws: &Workspace,
    label: &str,
    method: &CodeUnitRef,
    source: String,
    protocol: Option<String>,
) -> Result<crate::model::Event> {
    let head = ws
        .branch_heads()
        .get(label)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown branch {label:?}")))?;
    let state = ws.state_at(head)?;
    let before = state.method(method).cloned().ok_or_else(|| {
        Error::Conflict(crate::error::Conflict::new(
            crate::error::ConflictKind::Missing,
            method.clone(),
        ))
    })?;
    let mut after = before.clone();
    after.source = source;
    if let Some(protocol) = protocol {
        after.protocol = protocol;
    }
    Ok(crate::model::Event::MethodModified { before, after })
}

fn log_dir(log: &Path) -> PathBuf {
    match log.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Prints `id` and every entry it (transitively) triggered.
fn report_group(ws: &Workspace, id: &EntryId, out: &mut Output) {
    let filter = EntryFilter {
        from: Some(id.seq),
        ..EntryFilter::default()
    };
    let entries = ws.log().query(&filter);
    let mut group: Vec<&EntryId> = vec![id];
    for entry in entries {
        if &entry.id == id || entry.cause().is_some_and(|c| group.contains(&c)) {
            if &entry.id != id {
                group.push(&entry.id);
            }
            let depth = trigger_depth(ws.log(), entry).saturating_sub(trigger_depth(
                ws.log(),
                ws.log().entry(id).expect("reported entry exists"),
            ));
            let _ = writeln!(
                out.stdout,
                "{} {}{}{}",
                entry.id,
                "  ".repeat(depth),
                describe_entry(ws.log(), entry),
                listing_tags(ws.log(), entry)
            );
        }
    }
}

fn trigger_depth(log: &Log, entry: &Entry) -> usize {
    let mut depth = 0;
    let mut cursor = entry.cause();
    while let Some(id) = cursor {
        match log.entry(id) {
            Some(cause) => {
                depth += 1;
                cursor = cause.cause();
            }
            None => break,
        }
    }
    depth
}

/// Like `Event::describe`, but undo/redo name their local target's change.
fn describe_entry(log: &Log, entry: &Entry) -> String {
    use crate::model::Event;
    match &entry.event {
        Event::Undo { target } | Event::Redo { target } => match log.entry(target) {
            Some(t) => {
                let verb = if matches!(entry.event, Event::Undo { .. }) { "undo" } else { "redo" };
                format!("{verb} ({})", t.event.describe())
            }
            None => entry.event.describe(),
        },
        _ => entry.event.describe(),
    }
}

fn listing_tags(log: &Log, entry: &Entry) -> String {
    let _ = log;
    let mut text = String::new();
    if let Some(label) = entry.tags.text(TagKey::BranchLabel) {
        let _ = write!(text, " {{branch {label}}}");
    }
    for value in entry.tags.get(TagKey::RedoneFrom) {
        let _ = write!(text, " {{redone from {value}}}");
    }
    if let Some(label) = entry.tags.text(TagKey::CommitLabel) {
        let _ = write!(text, " {{{label}}}");
    }
    for value in entry.tags.get(TagKey::Comment) {
        let _ = write!(text, " {{'{value}'}}");
    }
    text
}

/// Entry listing: one line per entry, triggered entries indented under their cause.
pub fn render_log(log: &Log, filter: &EntryFilter, verbose: bool) -> String {
    let entries = log.query(filter);
    if entries.is_empty() {
        return "(no entries)\n".to_string();
    }
    let width = entries.iter().map(|e| e.id.to_string().len()).max().unwrap_or(0);
    let mut out = String::new();
    for entry in entries {
        let _ = write!(
            out,
            "{:<width$}  {}{}{}",
            entry.id.to_string(),
            "  ".repeat(trigger_depth(log, entry)),
            describe_entry(log, entry),
            listing_tags(log, entry)
        );
        if verbose {
            let author = entry.tags.text(TagKey::Author).unwrap_or("?");
            let at = entry.tags.text(TagKey::Timestamp).unwrap_or("?");
            let _ = write!(out, "  ({author}, {at})");
        }
        out.push('\n');
    }
    out
}

fn render_report(report: &ReplayReport) -> String {
    if report.is_empty() {
        return "nothing to replay\n".to_string();
    }
    let mut out = String::new();
    for outcome in &report.outcomes {
        let _ = match &outcome.status {
            ReplayStatus::Applied(id) => {
                writeln!(out, "applied {} {} as {id}", outcome.source, outcome.description)
            }
            ReplayStatus::WouldApply => {
                writeln!(out, "would apply {} {}", outcome.source, outcome.description)
            }
            ReplayStatus::Conflict(c) => {
                writeln!(out, "skipped {} {}: {c}", outcome.source, outcome.description)
            }
            ReplayStatus::Ignored(why) => {
                writeln!(out, "ignored {} {}: {why}", outcome.source, outcome.description)
            }
        };
    }
    out
}

fn render_definitions(ws: &Workspace, unit: Option<&CodeUnitRef>) -> Result<String> {
    let codebase = match unit {
        Some(u) => {
            if !ws.codebase().contains(u) {
                return Err(Error::Conflict(crate::error::Conflict::new(
                    crate::error::ConflictKind::Missing,
                    u.clone(),
                )));
            }
            ws.codebase().restricted_to(u)
        }
        None => ws.codebase().clone(),
    };
    if codebase.is_empty() {
        return Ok("(empty codebase)\n".to_string());
    }
    let mut out = String::new();
    for package in codebase.packages() {
        let _ = writeln!(out, "package {}", package.def.name);
        for class in package.classes.values() {
            let def = &class.def;
            let _ = write!(out, "  class {} < {}", def.name, def.superclass_name);
            if !def.instance_variables.is_empty() {
                let _ = write!(out, " [{}]", def.instance_variables.join(" "));
            }
            out.push('\n');
            for method in class.methods.values() {
                let _ = writeln!(
                    out,
                    "    {} ({}): {}",
                    method.unit().short_label(),
                    method.protocol,
                    method.source.replace('\n', "\\n")
                );
            }
        }
    }
    Ok(out)
}
