//! Python bindings. Records cross the boundary as JSON strings in the same
//! formats the command line reads and writes.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use todcsp::eval::{evaluate_corpus as eval_corpus, EvalItem, EvalSettings};
use todcsp::report::{Report, RunMetadata};
use todcsp::solver::DEFAULT_CAP;
use todcsp::{
    AblationConfig, Assignment, CspModel, CueLexicon, DelexDialogue, Dialogue, Error, KnowledgeBase, ModelFile, Ontology,
    Solver,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: DeserializeOwned>(what: &str, json: &str) -> PyResult<T> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("invalid {what}: {e}")))
}

fn dump<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

fn ablation(spec: Option<&str>) -> PyResult<AblationConfig> {
    spec.map(str::parse).transpose().map_err(py_err).map(Option::unwrap_or_default)
}

/// A dialogue's constraint model.
#[pyclass(module = "todcsp")]
struct Model {
    inner: CspModel,
}

#[pymethods]
impl Model {
    /// Builds the model of a delexicalized dialogue against its kb.
    #[new]
    #[pyo3(signature = (delex, ontology, kb, ablate=None, lexicon=None))]
    fn new(delex: &str, ontology: &str, kb: &str, ablate: Option<&str>, lexicon: Option<&str>) -> PyResult<Self> {
        let delex: DelexDialogue = parse("dialogue", delex)?;
        let ontology: Ontology = parse("ontology", ontology)?;
        let kb: KnowledgeBase = parse("kb", kb)?;
        let lexicon = match lexicon {
            Some(s) => parse("lexicon", s)?,
            None => CueLexicon::default(),
        };
        let (inner, _) =
            CspModel::from_dialogue(&delex, &ontology, &kb, &lexicon, &ablation(ablate)?).map_err(py_err)?;
        Ok(Model { inner })
    }

    /// Loads a model file written by `extract`.
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        let file: ModelFile = parse("model file", json)?;
        Ok(Model { inner: CspModel::from_file(file, None).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        dump(&self.inner.to_file(Vec::new()))
    }

    #[getter]
    fn dialogue_id(&self) -> Option<String> {
        self.inner.dialogue_id().map(str::to_string)
    }

    /// Variable names in order, e.g. `["V1", "V2"]`.
    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables().iter().map(|v| v.id.to_string()).collect()
    }

    /// `(count, exact, bucket)`; bucket is `None` when the cap left it open.
    #[pyo3(signature = (cap=DEFAULT_CAP))]
    fn count(&self, cap: u64) -> (u64, bool, Option<String>) {
        let s = Solver::new(&self.inner).count(cap);
        let bucket = s.bucket.map(|b| serde_json::to_value(b).unwrap().as_str().unwrap_or_default().to_string());
        (s.count, s.exact, bucket)
    }

    /// Solutions in lexicographic order, each as a JSON assignment.
    #[pyo3(signature = (cap=DEFAULT_CAP))]
    fn solutions(&self, cap: u64) -> Vec<String> {
        Solver::new(&self.inner).enumerate(cap).solutions.iter().map(dump).collect()
    }

    /// Consistency verdict of an assignment, as JSON.
    fn check(&self, assignment: &str) -> PyResult<String> {
        let a: Assignment = parse("assignment", assignment)?;
        Ok(dump(&todcsp::check_consistency(&self.inner, &a).map_err(py_err)?))
    }

    /// Full per-dialogue evaluation (verdict, count, closest solution), as JSON.
    #[pyo3(signature = (assignment, cap=DEFAULT_CAP))]
    fn evaluate(&self, assignment: &str, cap: u64) -> PyResult<String> {
        let a: Assignment = parse("assignment", assignment)?;
        Ok(dump(&todcsp::eval::evaluate_dialogue(&self.inner, &a, cap).map_err(py_err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(dialogue_id={:?}, variables={}, constraints={})",
            self.inner.dialogue_id(),
            self.inner.variables().len(),
            self.inner.constraints().len()
        )
    }
}

#[pyfunction]
fn delexicalize(dialogue: &str) -> PyResult<String> {
    let d: Dialogue = parse("dialogue", dialogue)?;
    Ok(dump(&todcsp::delexicalize(&d).map_err(py_err)?))
}

/// Fills the placeholders and returns the dialogue text.
#[pyfunction]
fn relexicalize(delex: &str, assignment: &str) -> PyResult<String> {
    let d: DelexDialogue = parse("dialogue", delex)?;
    let a: Assignment = parse("assignment", assignment)?;
    Ok(todcsp::relexicalize(&d, &a).to_text())
}

#[pyfunction]
#[pyo3(signature = (delex, kb, seed=0, type_restricted=false))]
fn relex_random(delex: &str, kb: &str, seed: u64, type_restricted: bool) -> PyResult<String> {
    let d: DelexDialogue = parse("dialogue", delex)?;
    let kb: KnowledgeBase = parse("kb", kb)?;
    Ok(dump(&todcsp::relex::relex_random(&d, &kb, seed, type_restricted)))
}

#[pyfunction]
fn relex_most_frequent(delex: &str, kb: &str) -> PyResult<String> {
    let d: DelexDialogue = parse("dialogue", delex)?;
    let kb: KnowledgeBase = parse("kb", kb)?;
    Ok(dump(&todcsp::relex::relex_most_frequent(&d, &kb)))
}

/// `(prompt, manifest)` for the LLM strategy.
#[pyfunction]
fn build_prompt(delex: &str, kb: &str) -> PyResult<(String, Vec<String>)> {
    let d: DelexDialogue = parse("dialogue", delex)?;
    let kb: KnowledgeBase = parse("kb", kb)?;
    let bundle = todcsp::relex::build_prompt(&d, &kb);
    Ok((bundle.prompt, bundle.manifest.iter().map(ToString::to_string).collect()))
}

/// `(assignment, warnings)` recovered from a model response.
#[pyfunction]
fn parse_llm_response(text: &str, delex: &str) -> PyResult<(String, Vec<String>)> {
    let d: DelexDialogue = parse("dialogue", delex)?;
    let (a, warnings) = todcsp::relex::parse_llm_response(text, &d);
    Ok((dump(&a), warnings))
}

/// Evaluates a list of `{"delex", "kb", "assignment"}` objects and returns a
/// JSON report.
#[pyfunction]
#[pyo3(signature = (items, ontology, cap=DEFAULT_CAP, ablate=None))]
fn evaluate_corpus(py: Python<'_>, items: &str, ontology: &str, cap: u64, ablate: Option<&str>) -> PyResult<String> {
    #[derive(serde::Deserialize)]
    struct Item {
        delex: DelexDialogue,
        kb: KnowledgeBase,
        assignment: Assignment,
    }
    let raw: Vec<Item> = parse("items", items)?;
    let ontology: Ontology = parse("ontology", ontology)?;
    let ablation = ablation(ablate)?;
    let items: Vec<EvalItem> =
        raw.into_iter().map(|i| EvalItem { delex: i.delex, kb: i.kb, assignment: i.assignment }).collect();
    let lexicon = CueLexicon::default();
    let report = py.detach(|| {
        let settings = EvalSettings { ontology: &ontology, lexicon: &lexicon, cap };
        let results = eval_corpus(&items, &settings, &ablation)?;
        let meta = RunMetadata::new(0, cap, None, &serde_json::json!({"cap": cap, "ablation": ablation}));
        Report::new(meta, results, Vec::new(), Vec::new())
    });
    Ok(dump(&report.map_err(py_err)?))
}

#[pymodule]
#[pyo3(name = "todcsp")]
fn todcsp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(delexicalize, m)?)?;
    m.add_function(wrap_pyfunction!(relexicalize, m)?)?;
    m.add_function(wrap_pyfunction!(relex_random, m)?)?;
    m.add_function(wrap_pyfunction!(relex_most_frequent, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_llm_response, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_corpus, m)?)?;
    m.add("DEFAULT_CAP", DEFAULT_CAP)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
