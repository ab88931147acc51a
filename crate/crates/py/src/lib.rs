//! Python bindings: a `Project` handle plus the pure ranking, stopping and
//! evaluation functions. Structured results come back as plain dicts and
//! lists with the same field names as the JSON API.

use std::collections::BTreeMap;
use std::path::PathBuf;

use abscreen_core::eval::{self, project_metrics};
use abscreen_core::highlight;
use abscreen_core::ingest::{self, import_batch, parse_records, ExportFormat, ExportScope, InputFormat};
use abscreen_core::llm::{confirm_threshold, threshold_preview};
use abscreen_core::ranker::{import_order, rank_unlabeled, RankerConfig};
use abscreen_core::stopping;
use abscreen_core::store::{is_llm_reviewer, ExecutionId, NewDecision, Project as CoreProject, StatusScope};
use abscreen_core::{Error, RefId};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

create_exception!(
    abscreen,
    AbscreenError,
    PyException,
    "Raised for every engine error; `code` names the kind."
);

fn py_err(e: Error) -> PyErr {
    Python::attach(|py| {
        let err = AbscreenError::new_err(e.to_string());
        let _ = err.value(py).setattr("code", e.code());
        err
    })
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for abscreen_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| AbscreenError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn ref_id(s: &str) -> PyResult<RefId> {
    s.parse().or_py()
}

/// A screening project directory. `open` and `create` hold the project's
/// write lock until `close()` or the end of a `with` block.
#[pyclass(module = "abscreen", unsendable)]
struct Project {
    inner: Option<CoreProject>,
    root: PathBuf,
}

impl Project {
    fn project(&self) -> PyResult<&CoreProject> {
        self.inner
            .as_ref()
            .ok_or_else(|| AbscreenError::new_err("project is closed"))
    }

    fn project_mut(&mut self) -> PyResult<&mut CoreProject> {
        self.inner
            .as_mut()
            .ok_or_else(|| AbscreenError::new_err("project is closed"))
    }
}

#[pymethods]
impl Project {
    #[staticmethod]
    fn create(path: PathBuf) -> PyResult<Self> {
        let inner = CoreProject::create(&path).or_py()?;
        Ok(Project {
            inner: Some(inner),
            root: path,
        })
    }

    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        let inner = CoreProject::open(&path).or_py()?;
        Ok(Project {
            inner: Some(inner),
            root: path,
        })
    }

    #[getter]
    fn root(&self) -> PathBuf {
        self.root.clone()
    }

    /// Releases the lock. Further calls raise.
    fn close(&mut self) {
        self.inner = None;
    }

    fn __enter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    fn __exit__(&mut self, _ty: Py<PyAny>, _value: Py<PyAny>, _tb: Py<PyAny>) -> bool {
        self.close();
        false
    }

    /// Imports a bibliography file; the format is guessed from the
    /// extension unless given (ris, nbib, xml, csv).
    #[pyo3(signature = (path, reviewer, format = None))]
    fn import_file<'py>(
        &mut self,
        py: Python<'py>,
        path: PathBuf,
        reviewer: &str,
        format: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let format = match format {
            Some(f) => f.parse::<InputFormat>().or_py()?,
            None => InputFormat::from_extension(&path)
                .ok_or_else(|| AbscreenError::new_err(format!("{}: unknown format", path.display())))?,
        };
        let bytes = std::fs::read(&path).map_err(|e| AbscreenError::new_err(format!("{}: {e}", path.display())))?;
        let drafts = parse_records(&bytes, format).or_py()?;
        let source = path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let report = import_batch(&drafts, self.project_mut()?, reviewer, &source).or_py()?;
        to_py(py, &report)
    }

    /// Appends a decision and returns its id.
    #[pyo3(signature = (ref_id, decision, reviewer, reason = ""))]
    fn decide(&mut self, ref_id: &str, decision: &str, reviewer: &str, reason: &str) -> PyResult<String> {
        if is_llm_reviewer(reviewer) {
            return Err(AbscreenError::new_err(
                "llm: reviewer ids are reserved for LLM judgments",
            ));
        }
        let new = NewDecision::new(self::ref_id(ref_id)?, reviewer, decision.parse().or_py()?).with_reason(reason);
        Ok(self.project_mut()?.append_decision(new).or_py()?.to_string())
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.project()?.references())
    }

    fn decisions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.project()?.decisions())
    }

    /// Effective status per ref_id, over all reviewers or one.
    #[pyo3(signature = (reviewer = None))]
    fn statuses(&self, reviewer: Option<String>) -> PyResult<BTreeMap<String, String>> {
        let scope = reviewer.map_or(StatusScope::AllReviewers, StatusScope::Reviewer);
        Ok(self
            .project()?
            .statuses(&scope)
            .into_iter()
            .map(|(id, s)| (id.to_string(), s.to_string()))
            .collect())
    }

    /// Unlabeled records as `(ref_id, probability)` in screening order.
    /// Before both classes are labeled the probability is `None` and the
    /// order is import order.
    #[pyo3(signature = (reviewer = None))]
    fn rank(&self, reviewer: Option<String>) -> PyResult<Vec<(String, Option<f64>)>> {
        let data = self.project()?;
        let config = RankerConfig {
            reviewer: reviewer.clone(),
            ..RankerConfig::from_project(data).or_py()?
        };
        match rank_unlabeled(data, &config) {
            Ok(q) => Ok(q
                .entries
                .iter()
                .map(|e| (e.ref_id.to_string(), Some(e.probability)))
                .collect()),
            Err(Error::ColdStart) => Ok(import_order(data, reviewer.as_deref())
                .into_iter()
                .map(|id| (id.to_string(), None))
                .collect()),
            Err(e) => Err(py_err(e)),
        }
    }

    #[pyo3(signature = (reviewer = None))]
    fn stopping<'py>(&self, py: Python<'py>, reviewer: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &stopping::project_signal(self.project()?, reviewer).or_py()?)
    }

    fn config_get(&self, key: &str) -> PyResult<Option<String>> {
        Ok(self.project()?.config_get(key))
    }

    fn config_set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.project_mut()?.config_set(key, value).or_py()
    }

    fn executions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.project()?.executions())
    }

    fn threshold_preview<'py>(&self, py: Python<'py>, execution: &str, t: f64) -> PyResult<Bound<'py, PyAny>> {
        let id: ExecutionId = execution.parse().or_py()?;
        to_py(py, &threshold_preview(self.project()?, &id, t).or_py()?)
    }

    fn confirm_threshold<'py>(&mut self, py: Python<'py>, execution: &str, t: f64) -> PyResult<Bound<'py, PyAny>> {
        let id: ExecutionId = execution.parse().or_py()?;
        to_py(py, &confirm_threshold(self.project_mut()?, &id, t).or_py()?)
    }

    /// Metrics of the project's decisions against `truth` (ref_id -> label).
    #[pyo3(signature = (truth, beta = 7.0))]
    fn metrics<'py>(&self, py: Python<'py>, truth: BTreeMap<String, bool>, beta: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &project_metrics(self.project()?, &truth, beta).or_py()?)
    }

    #[pyo3(signature = (format = "csv", scope = "all"))]
    fn export(&self, format: &str, scope: &str) -> PyResult<String> {
        let format: ExportFormat = format.parse().or_py()?;
        let scope: ExportScope = scope.parse().or_py()?;
        ingest::export_records(self.project()?, format, scope).or_py()
    }

    fn __repr__(&self) -> String {
        let state = if self.inner.is_some() { "open" } else { "closed" };
        format!("Project({:?}, {state})", self.root.display().to_string())
    }
}

#[pyfunction]
fn normalize_title(title: &str) -> String {
    ingest::normalize_title(title)
}

/// P(X <= k) for X ~ Hypergeometric(pool, successes, draws).
#[pyfunction]
fn hypergeom_cdf(k: u64, pool: u64, successes: u64, draws: u64) -> PyResult<f64> {
    stopping::hypergeom_cdf(k, pool, successes, draws).or_py()
}

#[pyfunction]
#[pyo3(signature = (relevant_found, screened, window, total_records, target_recall = 0.95, confidence = 0.95))]
fn statistical_test<'py>(
    py: Python<'py>,
    relevant_found: u64,
    screened: u64,
    window: u64,
    total_records: u64,
    target_recall: f64,
    confidence: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = stopping::statistical_test(
        relevant_found,
        screened,
        window,
        total_records,
        target_recall,
        confidence,
    )
    .or_py()?;
    to_py(py, &t)
}

#[pyfunction]
fn consecutive_stop(trajectory: Vec<bool>, n_consecutive: usize) -> bool {
    stopping::consecutive_stop(&trajectory, n_consecutive)
}

#[pyfunction]
fn fbeta(precision: f64, recall: f64, beta: f64) -> PyResult<f64> {
    eval::fbeta(precision, recall, beta).or_py()
}

/// Work saved over sampling for `(id, score)` pairs against `truth`.
#[pyfunction]
#[pyo3(signature = (scores, truth, recall = 0.95))]
fn wss_at_recall<'py>(
    py: Python<'py>,
    scores: Vec<(String, f64)>,
    truth: BTreeMap<String, bool>,
    recall: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &eval::wss_at_recall(&scores, &truth, recall).or_py()?)
}

/// Fold index per id.
#[pyfunction]
fn stratified_folds(truth: BTreeMap<String, bool>, k: usize, seed: u64) -> PyResult<BTreeMap<String, usize>> {
    Ok(eval::stratified_folds(&truth, k, seed).or_py()?.assignment)
}

#[pyfunction]
fn topk_overlap(a: Vec<String>, b: Vec<String>, k: usize) -> PyResult<f64> {
    eval::topk_overlap(&a, &b, k).or_py()
}

/// Keyword spans over `text` in character offsets.
#[pyfunction]
fn compute_highlights<'py>(
    py: Python<'py>,
    text: &str,
    include: Vec<String>,
    exclude: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &highlight::compute_highlights(text, &include, &exclude))
}

#[pymodule]
fn abscreen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AbscreenError", m.py().get_type::<AbscreenError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Project>()?;
    m.add_function(wrap_pyfunction!(normalize_title, m)?)?;
    m.add_function(wrap_pyfunction!(hypergeom_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(statistical_test, m)?)?;
    m.add_function(wrap_pyfunction!(consecutive_stop, m)?)?;
    m.add_function(wrap_pyfunction!(fbeta, m)?)?;
    m.add_function(wrap_pyfunction!(wss_at_recall, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_folds, m)?)?;
    m.add_function(wrap_pyfunction!(topk_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(compute_highlights, m)?)?;
    Ok(())
}
