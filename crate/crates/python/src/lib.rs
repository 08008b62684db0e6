//! Python bindings for the `prooforge` core crate.
//!
//! Exposes the token table, corpus loading, prompt rendering, synthetic-backend
//! proof search, the clarity helpers and the command line. Structured results
//! cross the boundary as plain dicts and lists.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use prooforge::backend::synthetic::split_theorem;
use prooforge::backend::{ProverBackend, SyntheticBackend};
use prooforge::clarity;
use prooforge::corpus::{
    extract_concepts, load_entity_corpus, load_proof_corpus, statement_requires, CorpusError, EntityCorpus,
    ProofCorpus, DEFAULT_CONCEPT_DEPTH,
};
use prooforge::gateway::{ChatModel, Gateway, HeuristicModel, ScriptedModel, YesNoLogprobs};
use prooforge::prompt::{render_planner_prompt, render_prove_prompt, InfoConfiguration, ProveInputs};
use prooforge::retrieval::{build_index, MockEmbedding, RetrievalIndex, TacticExample, DEFAULT_MOCK_DIM};
use prooforge::runlog::RunRecord;
use prooforge::search::{self, CorpusPort, Ports, RetrievalPort, SearchParams};
use prooforge::tokenizer::{DisambiguatedName, ResolutionContext, TokenClass, TokenId, TokenTable};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn json_to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn corpus_err(e: CorpusError) -> PyErr {
    match e {
        CorpusError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_config(slug: &str) -> PyResult<InfoConfiguration> {
    slug.parse().map_err(PyValueError::new_err)
}

fn context(
    aliases: Option<HashMap<String, String>>,
    open_modules: Option<Vec<String>>,
    locals: Option<HashMap<String, String>>,
) -> ResolutionContext {
    let mut ctx = ResolutionContext::new();
    for (alias, target) in aliases.unwrap_or_default() {
        ctx = ctx.with_alias(alias, target);
    }
    for module in open_modules.unwrap_or_default() {
        ctx = ctx.with_open_module(module);
    }
    for (name, ty) in locals.unwrap_or_default() {
        ctx = ctx.with_local(name, ty);
    }
    ctx
}

fn class_name(class: &TokenClass) -> String {
    match class {
        TokenClass::GlobalIdentifier => "global".into(),
        TokenClass::LocalVariable(ty) if ty.is_empty() => "local".into(),
        TokenClass::LocalVariable(ty) => format!("local:{ty}"),
        TokenClass::Reserved(label) => format!("reserved:{label}"),
    }
}

/// Entity token table: `canonical<ker>kernel` names to stable integer ids.
#[pyclass(name = "TokenTable", module = "prooforge")]
struct PyTokenTable {
    inner: TokenTable,
}

#[pymethods]
impl PyTokenTable {
    #[new]
    fn new() -> Self {
        PyTokenTable { inner: TokenTable::new() }
    }

    /// Intern an entity; the kernel path defaults to the canonical one.
    #[pyo3(signature = (canonical, kernel=None))]
    fn intern(&mut self, canonical: &str, kernel: Option<&str>) -> u32 {
        self.inner.intern_name(DisambiguatedName::new(canonical, kernel.unwrap_or(canonical))).0
    }

    #[pyo3(signature = (name, aliases=None, open_modules=None, locals=None))]
    fn resolve(
        &self,
        name: &str,
        aliases: Option<HashMap<String, String>>,
        open_modules: Option<Vec<String>>,
        locals: Option<HashMap<String, String>>,
    ) -> Option<u32> {
        self.inner.resolve_name(name, &context(aliases, open_modules, locals)).map(|id| id.0)
    }

    /// Rendered `canonical<ker>kernel` name of an entity token.
    fn render(&self, id: u32) -> Option<String> {
        self.inner.name_of(TokenId(id)).map(DisambiguatedName::render)
    }

    /// `(lexeme, class, id)` triples; class is `global`, `local[:type]` or `reserved:label`.
    #[pyo3(signature = (text, aliases=None, open_modules=None, locals=None))]
    fn tokenize(
        &self,
        text: &str,
        aliases: Option<HashMap<String, String>>,
        open_modules: Option<Vec<String>>,
        locals: Option<HashMap<String, String>>,
    ) -> Vec<(String, String, Option<u32>)> {
        self.inner
            .tokenize_term(text, &context(aliases, open_modules, locals))
            .into_iter()
            .map(|t| (t.lexeme, class_name(&t.class), t.id.map(|id| id.0)))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Entity corpus, optional proof corpus and the token table built from them.
#[pyclass(name = "Corpus", module = "prooforge")]
struct PyCorpus {
    table: TokenTable,
    entities: EntityCorpus,
    proofs: Option<ProofCorpus>,
}

impl PyCorpus {
    fn index(&self, provider: &MockEmbedding) -> PyResult<RetrievalIndex> {
        let premises: Vec<(String, String)> = self
            .entities
            .iter()
            .filter(|(_, r)| r.kind.is_provable())
            .map(|(_, r)| (r.name.clone(), split_theorem(&r.origin).1))
            .collect();
        let tactics: Vec<TacticExample> = self
            .proofs
            .iter()
            .flat_map(|p| p.tactic_examples())
            .map(|(t, s)| TacticExample {
                tactic: t.to_string(),
                goal: s.focused().map(|g| g.goal_surface.clone()).unwrap_or_default(),
            })
            .collect();
        build_index(provider, &premises, &tactics).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    #[pyo3(signature = (entities, proofs=None))]
    fn load(entities: PathBuf, proofs: Option<PathBuf>) -> PyResult<Self> {
        let mut table = TokenTable::new();
        let entities = load_entity_corpus(&entities, &mut table).map_err(corpus_err)?;
        let proofs = proofs.map(load_proof_corpus).transpose().map_err(corpus_err)?;
        Ok(PyCorpus { table, entities, proofs })
    }

    fn __len__(&self) -> usize {
        self.entities.len()
    }

    fn names(&self) -> Vec<String> {
        self.entities.iter().map(|(_, r)| r.name.clone()).collect()
    }

    /// The entity record for a name as a dict, or `None`.
    fn record<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.entities.find(&self.table, name).map(|(_, r)| json_to_py(py, r)).transpose()
    }

    fn token(&self, name: &str) -> Option<u32> {
        self.entities.find(&self.table, name).map(|(id, _)| id.0)
    }

    /// `Require Import` lines for the entities a statement mentions.
    fn requires(&self, statement: &str) -> Vec<String> {
        statement_requires(&self.entities, &self.table, statement, &[])
    }

    /// The initial proving (or planning) prompt for a statement.
    #[pyo3(signature = (statement, config="complete", kind="prove"))]
    fn prompt(&self, statement: &str, config: &str, kind: &str) -> PyResult<String> {
        let config = parse_config(config)?;
        let backend = SyntheticBackend::from_corpus(&self.entities);
        let session = backend
            .open_session(statement, &self.requires(statement))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let state = session.current_state().clone();
        let mut inputs = ProveInputs::new(&state);
        inputs.concepts = extract_concepts(&self.entities, &self.table, &state, DEFAULT_CONCEPT_DEPTH)
            .tokens
            .iter()
            .filter_map(|&id| self.entities.record(id).map(|r| (id, r)))
            .collect();
        match kind {
            "prove" => Ok(render_prove_prompt(&inputs, config).rendered),
            "planner" => Ok(render_planner_prompt(&inputs, config, &[])),
            other => Err(PyValueError::new_err(format!("unknown prompt kind {other:?}; expected prove or planner"))),
        }
    }

    /// Prove a statement on the synthetic backend. Without a script the
    /// built-in heuristic model answers every role. Returns a run record dict.
    #[pyo3(signature = (
        statement, script=None, seed=0, config="complete", max_depth=15, beam_width=3,
        max_retries=3, tactics_per_state=10, budget=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn prove<'py>(
        &self,
        py: Python<'py>,
        statement: &str,
        script: Option<PathBuf>,
        seed: u64,
        config: &str,
        max_depth: usize,
        beam_width: usize,
        max_retries: usize,
        tactics_per_state: usize,
        budget: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let config = parse_config(config)?;
        let mut params =
            SearchParams { max_depth, beam_width, max_retries, tactics_per_state, ..SearchParams::default() };
        params.budget = budget.unwrap_or_else(|| search::compute_budget(&params));
        let model: Arc<dyn ChatModel> = match script {
            Some(path) => Arc::new(ScriptedModel::load(path).map_err(PyValueError::new_err)?),
            None => Arc::new(HeuristicModel::new()),
        };
        let gateway = Gateway::single(model);
        let backend = SyntheticBackend::from_corpus(&self.entities);
        let provider = MockEmbedding::new(DEFAULT_MOCK_DIM, seed);
        let index = self.index(&provider)?;
        let (name, statement) = split_theorem(statement);
        let requires = self.requires(&statement);
        let ports = Ports {
            backend: &backend,
            gateway: &gateway,
            retrieval: Some(RetrievalPort { index: &index, provider: &provider }),
            corpus: Some(CorpusPort { corpus: &self.entities, table: &self.table }),
            config,
        };
        let name = name.unwrap_or_else(|| "goal".to_string());
        let record = match search::prove(&statement, &requires, &params, &ports) {
            Ok(result) => RunRecord::from_result(&name, config, &result),
            Err(e) => RunRecord::from_error(&name, config, &e.to_string()),
        };
        json_to_py(py, &record)
    }
}

/// Tactic-evaluation budget for a search configuration.
#[pyfunction]
#[pyo3(signature = (max_depth=15, beam_width=3, tactics_per_state=10, reconsider_factor=2))]
fn compute_budget(max_depth: usize, beam_width: usize, tactics_per_state: usize, reconsider_factor: usize) -> usize {
    search::compute_budget(&SearchParams {
        max_depth,
        beam_width,
        tactics_per_state,
        reconsider_factor,
        ..SearchParams::default()
    })
}

#[pyfunction]
fn clarity_score(log_p_yes: f64, log_p_no: f64) -> f64 {
    clarity::clarity_score(&YesNoLogprobs { log_p_yes, log_p_no })
}

#[pyfunction]
fn pearson_r(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    clarity::pearson_r(&xs, &ys).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Slugs of the eleven information configurations, in table order.
#[pyfunction]
fn info_configurations() -> Vec<&'static str> {
    InfoConfiguration::ALL.iter().map(|c| c.slug()).collect()
}

/// Run the command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("prooforge".to_string()).chain(args).collect();
    py.detach(|| prooforge::cli::run(argv))
}

#[pymodule]
#[pyo3(name = "prooforge")]
fn prooforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTokenTable>()?;
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(compute_budget, m)?)?;
    m.add_function(wrap_pyfunction!(clarity_score, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(info_configurations, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("KER_SEPARATOR", prooforge::tokenizer::KER_SEPARATOR)?;
    Ok(())
}
