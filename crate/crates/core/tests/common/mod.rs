//! Fixture loading shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use prooforge::backend::synthetic::split_theorem;
use prooforge::backend::{ProverBackend, SyntheticBackend};
use prooforge::corpus::{load_entity_corpus, load_proof_corpus, statement_requires, EntityCorpus, ProofCorpus};
use prooforge::gateway::{Gateway, ScriptedModel};
use prooforge::model::{EntityRecord, ProofState, TraceEntry};
use prooforge::prompt::{render_prove_prompt, InfoConfiguration, PromptBundle, ProveInputs};
use prooforge::retrieval::{build_index, MockEmbedding, RetrievalIndex, TacticExample, DEFAULT_MOCK_DIM};
use prooforge::search::{prove, CorpusPort, Ports, ProofResult, RetrievalPort, SearchParams};
use prooforge::tokenizer::{TokenId, TokenTable};

pub const SEED: u64 = 7;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> (TokenTable, EntityCorpus) {
    let mut table = TokenTable::new();
    let corpus = load_entity_corpus(fixtures().join("entities.jsonl"), &mut table).expect("fixture corpus");
    (table, corpus)
}

pub fn proofs() -> ProofCorpus {
    load_proof_corpus(fixtures().join("proofs.jsonl")).expect("fixture proofs")
}

/// Premises from provable corpus entries, tactics from the proof corpus.
pub fn index(corpus: &EntityCorpus, proofs: &ProofCorpus, provider: &MockEmbedding) -> RetrievalIndex {
    let premises: Vec<(String, String)> = corpus
        .iter()
        .filter(|(_, r)| r.kind.is_provable())
        .map(|(_, r)| (r.name.clone(), split_theorem(&r.origin).1))
        .collect();
    let tactics: Vec<TacticExample> = proofs
        .tactic_examples()
        .map(|(t, s)| TacticExample {
            tactic: t.to_string(),
            goal: s.focused().map(|g| g.goal_surface.clone()).unwrap_or_default(),
        })
        .collect();
    build_index(provider, &premises, &tactics).expect("index")
}

/// One line of `suite/expected.jsonl`.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct Expected {
    pub theorem: String,
    pub outcome: String,
    pub trace: Vec<String>,
    pub evaluations: usize,
    pub depth: usize,
}

/// `(name, statement, expectation)` for every suite theorem, in list order.
pub fn suite() -> Vec<(String, String, Expected)> {
    let dir = fixtures().join("suite");
    let list = std::fs::read_to_string(dir.join("theorems.txt")).unwrap();
    let expected: Vec<Expected> = std::fs::read_to_string(dir.join("expected.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let theorems: Vec<(String, String)> = list
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, stmt) = split_theorem(l);
            (name.unwrap(), stmt)
        })
        .collect();
    assert_eq!(theorems.len(), expected.len());
    theorems
        .into_iter()
        .zip(expected)
        .map(|((n, s), e)| {
            assert_eq!(n, e.theorem);
            (n, s, e)
        })
        .collect()
}

pub struct SuiteRun {
    pub result: ProofResult,
    pub requires: Vec<String>,
    pub backend: SyntheticBackend,
}

/// Prove a suite theorem with its scripted gateway under `params`.
pub fn run_suite_theorem(name: &str, statement: &str, params: &SearchParams) -> SuiteRun {
    let (table, corpus) = corpus();
    let proofs = proofs();
    let provider = MockEmbedding::new(DEFAULT_MOCK_DIM, SEED);
    let index = index(&corpus, &proofs, &provider);
    let backend = SyntheticBackend::from_corpus(&corpus);
    let script = fixtures().join(format!("suite/scripts/{name}.jsonl"));
    let gateway = Gateway::single(Arc::new(ScriptedModel::load(&script).unwrap()));
    let requires = statement_requires(&corpus, &table, statement, &[]);
    let ports = Ports {
        backend: &backend as &dyn ProverBackend,
        gateway: &gateway,
        retrieval: Some(RetrievalPort { index: &index, provider: &provider }),
        corpus: Some(CorpusPort { corpus: &corpus, table: &table }),
        config: InfoConfiguration::Complete,
    };
    let result = prove(statement, &requires, params, &ports).unwrap_or_else(|e| panic!("{name}: {e}"));
    SuiteRun { result, requires, backend }
}

/// The fixed prompt fixture: `0 + n = n` after `intros n`, with every
/// optional block populated.
pub fn golden_bundle(config: InfoConfiguration) -> PromptBundle {
    let (table, corpus) = corpus();
    let backend = SyntheticBackend::from_corpus(&corpus);
    let mut session = backend.open_session("forall n:nat, 0 + n = n", &[]).unwrap();
    let state: ProofState = session.apply_tactic("intros n").unwrap();
    let concepts: Vec<(TokenId, &EntityRecord)> = prooforge::corpus::extract_concepts(&corpus, &table, &state, 1)
        .tokens
        .iter()
        .filter_map(|&id| corpus.record(id).map(|r| (id, r)))
        .collect();
    let trace = vec![TraceEntry::new("intros n", "Introduces n into the context.")];
    let notes = vec!["simpl unfolds addition on a literal left operand".to_string()];
    let mut inputs = ProveInputs::new(&state);
    inputs.concepts = concepts;
    inputs.trace = &trace;
    inputs.summary = "The universally quantified variable is introduced; the equation remains.";
    inputs.premises = vec![
        "Demo.Arith.add_0_l : forall n : nat, 0 + n = n".to_string(),
        "Coq.Init.Peano.plus_n_O : forall n : nat, n = n + 0".to_string(),
    ];
    inputs.tactics = vec!["simpl".to_string(), "reflexivity".to_string()];
    inputs.notes = &notes;
    inputs.hint = "Addition recurses on its first argument.";
    render_prove_prompt(&inputs, config)
}
