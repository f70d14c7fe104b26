//! Python bindings: a `Workspace` class over the history engine and a
//! `run` function that behaves like the command line.

use std::path::PathBuf;

use codelog::cli::{dispatch, resolve_id};
use codelog::{ClassDef, CodeUnitRef, Definition, EntryId, Error, MethodDef};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(pycodelog, CodelogError, PyException, "Operation refused or failed.");
create_exception!(pycodelog, ConflictError, CodelogError, "A change does not apply to the codebase.");

fn py_err(err: Error) -> PyErr {
    match err {
        Error::Conflict(_) => ConflictError::new_err(err.to_string()),
        other => CodelogError::new_err(other.to_string()),
    }
}

fn unit(text: &str) -> PyResult<CodeUnitRef> {
    text.parse().map_err(py_err)
}

fn ids(list: &[EntryId]) -> Vec<String> {
    list.iter().map(ToString::to_string).collect()
}

/// A codebase and its change log, kept in a file or in memory.
#[pyclass(module = "pycodelog")]
struct Workspace {
    inner: codelog::Workspace,
}

impl Workspace {
    fn id(&self, text: &str) -> PyResult<EntryId> {
        resolve_id(self.inner.log(), text).map_err(py_err)
    }
}

#[pymethods]
impl Workspace {
    /// Opens the log at `path`, or keeps one in memory named `name`.
    #[new]
    #[pyo3(signature = (path=None, name="history", author=None))]
    fn new(path: Option<PathBuf>, name: &str, author: Option<String>) -> PyResult<Self> {
        let mut inner = match path {
            Some(path) => codelog::Workspace::open(&path).map_err(py_err)?.0,
            None => codelog::Workspace::in_memory(name).map_err(py_err)?,
        };
        if let Some(author) = author {
            inner.set_author(author).map_err(py_err)?;
        }
        Ok(Workspace { inner })
    }

    fn add_package(&mut self, name: &str) -> PyResult<String> {
        Ok(self.inner.add_package(name).map_err(py_err)?.to_string())
    }

    #[pyo3(signature = (package, name, superclass="Object", instance_variables=Vec::new(), comment=""))]
    fn add_class(
        &mut self,
        package: &str,
        name: &str,
        superclass: &str,
        instance_variables: Vec<String>,
        comment: &str,
    ) -> PyResult<String> {
        let def = ClassDef {
            superclass_name: superclass.to_string(),
            instance_variables,
            comment: comment.to_string(),
            ..ClassDef::new(package, name)
        };
        Ok(self.inner.add_class(def).map_err(py_err)?.to_string())
    }

    /// `unit` names the method, e.g. `"P/A>>m"` or `"P/A class>>new"`.
    #[pyo3(signature = (unit, source, protocol=None))]
    fn add_method(&mut self, unit: &str, source: &str, protocol: Option<String>) -> PyResult<String> {
        let unit = self::unit(unit)?;
        let (Some(class), Some(selector)) = (unit.class_name(), unit.selector()) else {
            return Err(py_err(Error::InvalidArgument(format!("{unit} is not a method"))));
        };
        let mut def = MethodDef::new(unit.package_name(), class, selector, source);
        def.class_side = unit.is_class_side();
        if let Some(protocol) = protocol {
            def.protocol = protocol;
        }
        Ok(self.inner.add_method(def).map_err(py_err)?.to_string())
    }

    #[pyo3(signature = (unit, source=None, protocol=None))]
    fn modify_method(
        &mut self,
        unit: &str,
        source: Option<String>,
        protocol: Option<String>,
    ) -> PyResult<String> {
        let unit = self::unit(unit)?;
        let id = self.inner.modify_method(&unit, source, protocol).map_err(py_err)?;
        Ok(id.to_string())
    }

    fn remove(&mut self, unit: &str) -> PyResult<String> {
        let unit = self::unit(unit)?;
        Ok(self.inner.remove(&unit).map_err(py_err)?.to_string())
    }

    fn undo(&mut self, id: &str) -> PyResult<String> {
        let id = self.id(id)?;
        Ok(self.inner.undo(&id).map_err(py_err)?.to_string())
    }

    fn redo(&mut self, id: &str) -> PyResult<String> {
        let id = self.id(id)?;
        Ok(self.inner.redo(&id).map_err(py_err)?.to_string())
    }

    /// Returns the Condense entry, or None when nothing was neutralized.
    fn condense(&mut self, unit: &str) -> PyResult<Option<String>> {
        let unit = self::unit(unit)?;
        let id = self.inner.condense(&unit).map_err(py_err)?;
        Ok(id.map(|id| id.to_string()))
    }

    /// Returns the Split entry and the branch head.
    fn split(&mut self, targets: Vec<String>, label: &str) -> PyResult<(String, String)> {
        let targets = targets
            .iter()
            .map(|t| self.id(t))
            .collect::<PyResult<Vec<_>>>()?;
        let (split, head) = self.inner.split(&targets, label, Vec::new()).map_err(py_err)?;
        Ok((split.to_string(), head.to_string()))
    }

    fn comment(&mut self, id: &str, text: &str) -> PyResult<()> {
        let id = self.id(id)?;
        self.inner.comment(&id, text).map_err(py_err)?;
        Ok(())
    }

    fn rename_method(&mut self, unit: &str, new_selector: &str) -> PyResult<String> {
        let unit = self::unit(unit)?;
        Ok(self.inner.rename_method(&unit, new_selector).map_err(py_err)?.to_string())
    }

    fn rename_class(&mut self, unit: &str, new_name: &str) -> PyResult<String> {
        let unit = self::unit(unit)?;
        Ok(self.inner.rename_class(&unit, new_name).map_err(py_err)?.to_string())
    }

    /// Writes `<package>-<label>.version` into `directory`; returns the
    /// SaveVersion entry and the file path.
    fn save_version(&mut self, package: &str, label: &str, directory: PathBuf) -> PyResult<(String, PathBuf)> {
        let (id, path) = self
            .inner
            .save_version(package, label, &directory)
            .map_err(py_err)?;
        Ok((id.to_string(), path))
    }

    fn load_version(&mut self, path: PathBuf) -> PyResult<String> {
        Ok(self.inner.load_version(&path, Vec::new()).map_err(py_err)?.to_string())
    }

    /// Text rendering of the unit's history tree.
    fn view(&self, unit: &str) -> PyResult<String> {
        Ok(self.inner.view(&self::unit(unit)?).render())
    }

    fn effective_history(&self, unit: &str) -> PyResult<Vec<String>> {
        Ok(ids(&self.inner.effective_history(&self::unit(unit)?)))
    }

    /// `(id, kind, description)` for every entry in append order.
    fn entries(&self) -> Vec<(String, String, String)> {
        self.inner
            .log()
            .entries()
            .iter()
            .map(|e| (e.id.to_string(), e.event.kind().to_string(), e.event.describe()))
            .collect()
    }

    /// Every unit currently in the codebase.
    fn units(&self) -> Vec<String> {
        self.inner.codebase().units().iter().map(ToString::to_string).collect()
    }

    /// Source of a method, None when it does not exist.
    fn source(&self, unit: &str) -> PyResult<Option<String>> {
        Ok(match self.inner.codebase().definition(&self::unit(unit)?) {
            Some(Definition::Method(def)) => Some(def.source),
            _ => None,
        })
    }

    /// Whether replaying the log reproduces the codebase.
    fn is_consistent(&self) -> bool {
        self.inner.is_consistent()
    }

    fn __len__(&self) -> usize {
        self.inner.log().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Workspace(log={:?}, entries={})",
            self.inner.log().name(),
            self.inner.log().len()
        )
    }
}

/// Runs one command line; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run(args: Vec<String>) -> (i32, String, String) {
    let out = dispatch(std::iter::once("codelog".to_string()).chain(args));
    (out.code, out.stdout, out.stderr)
}

#[pymodule]
fn pycodelog(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Workspace>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("CodelogError", m.py().get_type::<CodelogError>())?;
    m.add("ConflictError", m.py().get_type::<ConflictError>())?;
    Ok(())
}
