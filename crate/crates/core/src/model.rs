//! Entities, proof states, interactive proofs and the records carried through
//! proof search.
//!
//! Everything here is a plain value type. Validation predicates return lists of
//! human-readable problems instead of failing, so loaders can attach line
//! numbers and the search can assert invariants in debug runs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tokenizer::TokenId;

/// Marker used for hypotheses the user never named.
pub const ANONYMOUS_HYPOTHESIS: &str = "_Anonymous";

/// Fixed capacity of the public notebook.
pub const NOTEBOOK_CAPACITY: usize = 15;

/// Width of [`state_fingerprint`] output in hex characters.
pub const FINGERPRINT_HEX_LEN: usize = 32;

/// Category of a Coq binding.
///
/// Serialized as its label; unknown labels round-trip through `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum EntityKind {
    Variable,
    Parameter,
    Definition,
    Theorem,
    Lemma,
    Inductive,
    Constructor,
    Fixpoint,
    Axiom,
    Notation,
    Other(String),
}

impl EntityKind {
    pub fn label(&self) -> &str {
        match self {
            EntityKind::Variable => "Variable",
            EntityKind::Parameter => "Parameter",
            EntityKind::Definition => "Definition",
            EntityKind::Theorem => "Theorem",
            EntityKind::Lemma => "Lemma",
            EntityKind::Inductive => "Inductive",
            EntityKind::Constructor => "Constructor",
            EntityKind::Fixpoint => "Fixpoint",
            EntityKind::Axiom => "Axiom",
            EntityKind::Notation => "Notation",
            EntityKind::Other(label) => label,
        }
    }

    /// Statements that can be cited as premises.
    pub fn is_provable(&self) -> bool {
        matches!(self, EntityKind::Theorem | EntityKind::Lemma | EntityKind::Axiom)
    }
}

impl From<String> for EntityKind {
    fn from(label: String) -> Self {
        match label.as_str() {
            "Variable" => EntityKind::Variable,
            "Parameter" => EntityKind::Parameter,
            "Definition" => EntityKind::Definition,
            "Theorem" => EntityKind::Theorem,
            "Lemma" => EntityKind::Lemma,
            "Inductive" => EntityKind::Inductive,
            "Constructor" => EntityKind::Constructor,
            "Fixpoint" => EntityKind::Fixpoint,
            "Axiom" => EntityKind::Axiom,
            "Notation" => EntityKind::Notation,
            _ => EntityKind::Other(label),
        }
    }
}

impl From<EntityKind> for String {
    fn from(kind: EntityKind) -> Self {
        kind.label().to_string()
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A named binding with its source text and elaborated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub name: String,
    pub kernel_name: String,
    pub kind: EntityKind,
    pub origin: String,
    pub internal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intuition: Option<String>,
    #[serde(default)]
    pub source_file: String,
    #[serde(default)]
    pub dependencies: Vec<TokenId>,
    /// Pre-translated variants used by the Chinese-translation configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_zh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_zh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intuition_zh: Option<String>,
    /// Fields this version does not understand; kept so re-serialization is lossless.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl EntityRecord {
    pub fn new(
        name: impl Into<String>,
        kind: EntityKind,
        origin: impl Into<String>,
        internal: impl Into<String>,
    ) -> Self {
        let name = name.into();
        EntityRecord {
            kernel_name: name.clone(),
            name,
            kind,
            origin: origin.into(),
            internal: internal.into(),
            intuition: None,
            source_file: String::new(),
            dependencies: Vec::new(),
            origin_zh: None,
            internal_zh: None,
            intuition_zh: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_kernel_name(mut self, kernel_name: impl Into<String>) -> Self {
        self.kernel_name = kernel_name.into();
        self
    }

    pub fn with_intuition(mut self, intuition: impl Into<String>) -> Self {
        self.intuition = Some(intuition.into());
        self
    }

    pub fn with_source_file(mut self, source_file: impl Into<String>) -> Self {
        self.source_file = source_file.into();
        self
    }

    /// Last dot-separated segment of the canonical name.
    pub fn short_name(&self) -> &str {
        short_name(&self.name)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !is_dotted_path(&self.name) {
            out.push(format!("name {:?} is not a dotted path", self.name));
        }
        if !is_dotted_path(&self.kernel_name) {
            out.push(format!("kernel_name {:?} is not a dotted path", self.kernel_name));
        }
        if let EntityKind::Other(label) = &self.kind {
            if label.trim().is_empty() {
                out.push("kind label is empty".to_string());
            }
        }
        if self.origin.trim().is_empty() {
            out.push("origin is empty".to_string());
        }
        if self.internal.trim().is_empty() {
            out.push("internal is empty".to_string());
        }
        let mut seen = HashSet::new();
        for dep in &self.dependencies {
            if !seen.insert(*dep) {
                out.push(format!("duplicate dependency {dep}"));
            }
        }
        out
    }
}

pub fn short_name(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

/// Non-empty, no empty segments between dots.
pub fn is_dotted_path(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace) && s.split('.').all(|seg| !seg.is_empty())
}

/// A named hypothesis; which representation `ty` holds depends on the list it sits in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl Hypothesis {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Hypothesis { name: name.into(), ty: ty.into() }
    }
}

/// One open goal with its context, in surface and internal form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoalState {
    #[serde(default)]
    pub hypotheses_surface: Vec<Hypothesis>,
    #[serde(default)]
    pub hypotheses_internal: Vec<Hypothesis>,
    pub goal_surface: String,
    pub goal_internal: String,
}

impl GoalState {
    /// A goal with an empty context.
    pub fn new(goal_surface: impl Into<String>, goal_internal: impl Into<String>) -> Self {
        GoalState {
            hypotheses_surface: Vec::new(),
            hypotheses_internal: Vec::new(),
            goal_surface: goal_surface.into(),
            goal_internal: goal_internal.into(),
        }
    }

    pub fn with_hypothesis(
        mut self,
        name: &str,
        surface_ty: impl Into<String>,
        internal_ty: impl Into<String>,
    ) -> Self {
        self.hypotheses_surface.push(Hypothesis::new(name, surface_ty));
        self.hypotheses_internal.push(Hypothesis::new(name, internal_ty));
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hypotheses_surface.len() != self.hypotheses_internal.len() {
            out.push(format!(
                "{} surface hypotheses but {} internal",
                self.hypotheses_surface.len(),
                self.hypotheses_internal.len()
            ));
        }
        for (i, (s, k)) in self.hypotheses_surface.iter().zip(&self.hypotheses_internal).enumerate() {
            if s.name.is_empty() || k.name.is_empty() {
                out.push(format!("hypothesis {i} has an empty name"));
            } else if s.name != k.name {
                out.push(format!("hypothesis {i} named {:?} on the surface but {:?} internally", s.name, k.name));
            }
        }
        if self.goal_surface.trim().is_empty() {
            out.push("surface goal is empty".to_string());
        }
        if self.goal_internal.trim().is_empty() {
            out.push("internal goal is empty".to_string());
        }
        out
    }
}

/// Ordered list of open goals. Empty means the proof is finished.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProofState {
    pub goals: Vec<GoalState>,
}

impl ProofState {
    pub fn new(goals: Vec<GoalState>) -> Self {
        ProofState { goals }
    }

    pub fn completed() -> Self {
        ProofState::default()
    }

    pub fn single(goal: GoalState) -> Self {
        ProofState { goals: vec![goal] }
    }

    pub fn is_complete(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn focused(&self) -> Option<&GoalState> {
        self.goals.first()
    }

    pub fn violations(&self) -> Vec<String> {
        self.goals
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.violations().into_iter().map(move |v| format!("goal {i}: {v}")))
            .collect()
    }

    /// Structural equality after whitespace normalization of every text.
    pub fn equivalent(&self, other: &ProofState) -> bool {
        self.goals.len() == other.goals.len()
            && self.goals.iter().zip(&other.goals).all(|(a, b)| {
                let hyps_eq = |x: &[Hypothesis], y: &[Hypothesis]| {
                    x.len() == y.len()
                        && x.iter().zip(y).all(|(p, q)| {
                            normalize_ws(&p.name) == normalize_ws(&q.name) && normalize_ws(&p.ty) == normalize_ws(&q.ty)
                        })
                };
                hyps_eq(&a.hypotheses_surface, &b.hypotheses_surface)
                    && hyps_eq(&a.hypotheses_internal, &b.hypotheses_internal)
                    && normalize_ws(&a.goal_surface) == normalize_ws(&b.goal_surface)
                    && normalize_ws(&a.goal_internal) == normalize_ws(&b.goal_internal)
            })
    }
}

pub fn goals_remaining(state: &ProofState) -> usize {
    state.goals.len()
}

/// Collapse whitespace runs to one space and trim the ends.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stable digest of a state's internal representation.
///
/// Surface texts never contribute. Every field is length-prefixed so that
/// field boundaries cannot be confused.
pub fn state_fingerprint(state: &ProofState) -> String {
    let mut hasher = Sha256::new();
    let mut feed = |s: &str| {
        hasher.update((s.len() as u64).to_le_bytes());
        hasher.update(s.as_bytes());
    };
    feed(&state.goals.len().to_string());
    for goal in &state.goals {
        feed(&goal.hypotheses_internal.len().to_string());
        for h in &goal.hypotheses_internal {
            feed(&normalize_ws(&h.name));
            feed(&normalize_ws(&h.ty));
        }
        feed(&normalize_ws(&goal.goal_internal));
    }
    let digest = hasher.finalize();
    let mut hex = hex::encode(digest);
    hex.truncate(FINGERPRINT_HEX_LEN);
    hex
}

/// One recorded tactic application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticStep {
    pub tactic: String,
    pub before: ProofState,
    pub after: ProofState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveProof {
    pub theorem_name: String,
    pub steps: Vec<TacticStep>,
    /// Set by the producer when the final state discharges every goal.
    #[serde(default)]
    pub complete: bool,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// A structural defect in a recorded proof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainViolation {
    pub step_index: usize,
    pub description: String,
}

impl fmt::Display for ChainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step_index, self.description)
    }
}

/// Check that every step starts where the previous one ended.
///
/// Only structure is checked; whether a tactic really maps `before` to `after`
/// is the proof engine's business.
pub fn validate_proof_chain(proof: &InteractiveProof) -> Vec<ChainViolation> {
    let mut out = Vec::new();
    for (i, step) in proof.steps.iter().enumerate() {
        let mut push = |description: String| out.push(ChainViolation { step_index: i, description });
        if step.tactic.trim().is_empty() {
            push("empty tactic".to_string());
        }
        for v in step.before.violations() {
            push(format!("before state: {v}"));
        }
        for v in step.after.violations() {
            push(format!("after state: {v}"));
        }
        if i > 0 && !proof.steps[i - 1].after.equivalent(&step.before) {
            push(format!("before state does not match the state after step {}", i - 1));
        }
    }
    if let Some(last) = proof.steps.last() {
        let finished = last.after.is_complete();
        if finished && !proof.complete {
            out.push(ChainViolation {
                step_index: proof.steps.len() - 1,
                description: "final state has no goals but the proof is not marked complete".to_string(),
            });
        } else if !finished && proof.complete {
            out.push(ChainViolation {
                step_index: proof.steps.len() - 1,
                description: format!("proof marked complete but {} goal(s) remain", last.after.goals.len()),
            });
        }
    }
    out
}

/// One step of a search trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tactic: String,
    #[serde(default)]
    pub explanation: String,
}

impl TraceEntry {
    pub fn new(tactic: impl Into<String>, explanation: impl Into<String>) -> Self {
        TraceEntry { tactic: tactic.into(), explanation: explanation.into() }
    }
}

/// A beam entry: the state reached, how it was reached, and its quality estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchCandidate {
    pub state: ProofState,
    pub trace: Vec<TraceEntry>,
    pub summary: String,
    pub score: f64,
}

impl SearchCandidate {
    pub fn root(state: ProofState) -> Self {
        SearchCandidate { state, trace: Vec::new(), summary: String::new(), score: 0.5 }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.score) && self.state.violations().is_empty()
    }
}

/// Capacity-bounded list of proof insights shared across branches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notebook {
    items: Vec<String>,
    capacity: usize,
}

impl Default for Notebook {
    fn default() -> Self {
        Notebook { items: Vec::new(), capacity: NOTEBOOK_CAPACITY }
    }
}

impl Notebook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the first `capacity` items.
    pub fn from_ranked(items: Vec<String>) -> Self {
        let mut nb = Notebook::new();
        nb.items = items.into_iter().take(nb.capacity).collect();
        nb
    }

    /// Appends, then drops the oldest items until the capacity holds.
    pub fn append_newest(&mut self, insights: impl IntoIterator<Item = String>) {
        self.items.extend(insights);
        if self.items.len() > self.capacity {
            let excess = self.items.len() - self.capacity;
            self.items.drain(..excess);
        }
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
