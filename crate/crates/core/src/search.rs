//! Layered beam search over tactic applications.
//!
//! Each layer expands every candidate in turn: concepts are extracted from the
//! corpus, the Planner writes a strategy, the strategy text is the retrieval
//! query for premises and tactic examples, the Executor proposes up to
//! `tactics_per_state` tactics, and each is validated against the candidate's
//! prover session. Failed tactics go back to the Planner with the compiler
//! errors, at most `max_retries` times. Every valid tactic is applied on a
//! forked session and becomes a child; a child with no goals ends the search.
//! After the layer the shared notebook is merged and the layer is cut to the
//! beam width.
//!
//! Every `compile_tactic` call takes one unit from the budget. When the budget
//! runs dry the current candidate still applies what it has validated, then
//! the search stops with [`Outcome::BudgetExhausted`].
//!
//! Expansion is sequential, so runs with scripted ports are reproducible.

use std::collections::{BTreeSet, HashSet};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{is_goal_complete, is_subgoal_complete, truncate_error, ProverBackend, ProverSession};
use crate::corpus::{extract_concepts, EntityCorpus};
use crate::gateway::{
    json_objects, parse_action_response, ActionResponse, ChatMessage, Gateway, GatewayError, ModelRole,
};
use crate::model::{
    goals_remaining, normalize_ws, state_fingerprint, EntityRecord, Notebook, ProofState, SearchCandidate, TraceEntry,
};
use crate::prompt::{
    render_explanation_prompt, render_info_prompt, render_notes_prompt, render_planner_prompt, render_prove_prompt,
    render_rank_prompt, render_summary_prompt, FailedTactic, InfoConfiguration, ProveInputs, RankEntry,
};
use crate::retrieval::{EmbeddingProvider, PayloadKind, RetrievalIndex, DEFAULT_PREMISE_K, DEFAULT_TACTIC_K};
use crate::tokenizer::{TokenId, TokenTable};

/// Summary score used when the reply carries none.
pub const DEFAULT_SUMMARY_SCORE: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error("{context}: {message}")]
    PortFailure { context: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    #[default]
    ModelBased,
    ShortestProof,
}

impl FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "model-based" | "model" => Ok(SelectionMode::ModelBased),
            "shortest-proof" | "shortest" => Ok(SelectionMode::ShortestProof),
            other => Err(format!("unknown selection mode {other:?} (expected model-based or shortest-proof)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub max_depth: usize,
    pub beam_width: usize,
    pub max_retries: usize,
    pub tactics_per_state: usize,
    pub reconsider_factor: usize,
    pub budget: usize,
    pub selection_mode: SelectionMode,
    pub premise_k: usize,
    pub tactic_k: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        let mut p = SearchParams {
            max_depth: 15,
            beam_width: 3,
            max_retries: 3,
            tactics_per_state: 10,
            reconsider_factor: 2,
            budget: 0,
            selection_mode: SelectionMode::ModelBased,
            premise_k: DEFAULT_PREMISE_K,
            tactic_k: DEFAULT_TACTIC_K,
        };
        p.budget = compute_budget(&p);
        p
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        let positive = [
            ("max_depth", self.max_depth),
            ("beam_width", self.beam_width),
            ("tactics_per_state", self.tactics_per_state),
            ("reconsider_factor", self.reconsider_factor),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SearchError::InvalidParams(format!("{name} must be positive")));
            }
        }
        if self.budget < self.tactics_per_state {
            return Err(SearchError::InvalidParams(format!(
                "budget {} is smaller than tactics_per_state {}",
                self.budget, self.tactics_per_state
            )));
        }
        Ok(())
    }

    /// Same parameters with the budget recomputed from the others.
    pub fn with_derived_budget(mut self) -> Self {
        self.budget = compute_budget(&self);
        self
    }
}

/// Evaluation ceiling: one full layer from the root plus `D - 1` layers of
/// `B` candidates, each allowed `tactics_per_state * reconsider_factor`.
pub fn compute_budget(p: &SearchParams) -> usize {
    let per_state = p.tactics_per_state * p.reconsider_factor;
    per_state + p.max_depth.saturating_sub(1) * p.beam_width * per_state
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "trace", rename_all = "snake_case")]
pub enum Outcome {
    Proved(Vec<TraceEntry>),
    Failure,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofResult {
    pub outcome: Outcome,
    pub tactic_evaluations_used: usize,
    pub depth_reached: usize,
    pub layers: Vec<LayerLog>,
}

impl ProofResult {
    pub fn is_proved(&self) -> bool {
        matches!(self.outcome, Outcome::Proved(_))
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        match &self.outcome {
            Outcome::Proved(t) => Some(t),
            _ => None,
        }
    }

    pub fn outcome_label(&self) -> &'static str {
        match self.outcome {
            Outcome::Proved(_) => "proved",
            Outcome::Failure => "failure",
            Outcome::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub tactic: String,
    /// 0 for the first batch, then one per retry.
    pub round: usize,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpansionLog {
    pub state: String,
    pub trace: Vec<String>,
    pub strategies: Vec<String>,
    pub premises: Vec<String>,
    pub retrieved_tactics: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub info_requests: Vec<String>,
    pub attempts: Vec<Attempt>,
    pub retries: usize,
    pub applied: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruned: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerLog {
    pub depth: usize,
    pub expansions: Vec<ExpansionLog>,
    pub children: usize,
    pub duplicates: usize,
    pub selected: Vec<String>,
    pub notes: Vec<String>,
    pub budget_used: usize,
}

pub struct RetrievalPort<'a> {
    pub index: &'a RetrievalIndex,
    pub provider: &'a dyn EmbeddingProvider,
}

pub struct CorpusPort<'a> {
    pub corpus: &'a EntityCorpus,
    pub table: &'a TokenTable,
}

pub struct Ports<'a> {
    pub backend: &'a dyn ProverBackend,
    pub gateway: &'a Gateway,
    pub retrieval: Option<RetrievalPort<'a>>,
    pub corpus: Option<CorpusPort<'a>>,
    pub config: InfoConfiguration,
}

/// Monotone evaluation counter with a hard ceiling.
#[derive(Debug)]
pub struct Budget {
    limit: usize,
    used: AtomicUsize,
}

impl Budget {
    pub fn new(limit: usize) -> Self {
        Budget { limit, used: AtomicUsize::new(0) }
    }

    /// Take one evaluation; false once the ceiling is reached.
    pub fn try_take(&self) -> bool {
        self.used.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < self.limit).then_some(u + 1)).is_ok()
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.limit - self.used()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub text: String,
    pub score: f64,
}

/// The `Score:` value of a summary reply, if it lies in [0, 1].
pub fn parse_summary_score(text: &str) -> Option<f64> {
    let re = Regex::new(r"(?i)score\s*[:=]\s*([0-9]*\.?[0-9]+)").expect("static regex");
    re.captures_iter(text).filter_map(|c| c[1].parse::<f64>().ok()).filter(|v| (0.0..=1.0).contains(v)).last()
}

/// Explanation of one applied tactic and a summary of the extended trace.
/// Gateway failures degrade to an empty explanation and a default score.
pub fn explain_and_summarize(
    initial: &ProofState,
    before: &ProofState,
    tactic: &str,
    after: &ProofState,
    trace: &[TraceEntry],
    gateway: &Gateway,
) -> (String, Summary) {
    let explanation =
        gateway.ask(ModelRole::Planner, &render_explanation_prompt(before, tactic, after)).unwrap_or_else(|e| {
            log::warn!("explanation for `{tactic}` failed: {e}");
            String::new()
        });
    let mut extended = trace.to_vec();
    extended.push(TraceEntry::new(tactic, explanation.trim()));
    let summary = match gateway.ask(ModelRole::Planner, &render_summary_prompt(initial, &extended, after)) {
        Ok(text) => {
            let score = parse_summary_score(&text).unwrap_or(DEFAULT_SUMMARY_SCORE);
            Summary { text: text.trim().to_string(), score }
        }
        Err(e) => {
            log::warn!("summary after `{tactic}` failed: {e}");
            Summary { text: String::new(), score: DEFAULT_SUMMARY_SCORE }
        }
    };
    (explanation.trim().to_string(), summary)
}

/// Merge `insights` into the notebook through the gateway. An unusable reply
/// keeps the old items and appends the insights, dropping the oldest.
pub fn update_notebook(initial: &ProofState, insights: &[String], notebook: &Notebook, gateway: &Gateway) -> Notebook {
    if insights.is_empty() {
        return notebook.clone();
    }
    let prompt = render_notes_prompt(initial, notebook.items(), insights, notebook.capacity());
    let merged = gateway.ask(ModelRole::Planner, &prompt).ok().and_then(|reply| {
        json_objects(&reply).find_map(|v| {
            let items: Vec<String> = v
                .get("notes")?
                .as_array()?
                .iter()
                .filter_map(|x| x.as_str())
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            Some(items)
        })
    });
    match merged {
        Some(items) => Notebook::from_ranked(items),
        None => {
            let mut nb = notebook.clone();
            nb.append_newest(insights.iter().cloned());
            nb
        }
    }
}

fn shortest_key(c: &SearchCandidate) -> (usize, usize, String) {
    (goals_remaining(&c.state), c.trace.len(), state_fingerprint(&c.state))
}

/// Indices of the `width` best candidates, best first.
pub fn select_best_indices(
    initial: &ProofState,
    candidates: &[SearchCandidate],
    width: usize,
    mode: SelectionMode,
    gateway: &Gateway,
) -> Vec<usize> {
    if candidates.len() <= width {
        return (0..candidates.len()).collect();
    }
    let mut shortest: Vec<usize> = (0..candidates.len()).collect();
    shortest.sort_by_cached_key(|&i| shortest_key(&candidates[i]));
    if mode == SelectionMode::ShortestProof {
        shortest.truncate(width);
        return shortest;
    }
    let entries: Vec<RankEntry> = candidates
        .iter()
        .enumerate()
        .map(|(id, c)| RankEntry { id, state: &c.state, trace: &c.trace, summary: &c.summary })
        .collect();
    let ranking: Option<Vec<usize>> =
        gateway.ask(ModelRole::Planner, &render_rank_prompt(initial, &entries)).ok().and_then(|reply| {
            json_objects(&reply).find_map(|v| {
                let ids: Vec<usize> =
                    v.get("ranking")?.as_array()?.iter().filter_map(|x| x.as_u64()).map(|x| x as usize).collect();
                Some(ids)
            })
        });
    let mut chosen = Vec::new();
    for id in ranking.unwrap_or_default() {
        if id < candidates.len() && !chosen.contains(&id) {
            chosen.push(id);
        }
    }
    if chosen.is_empty() {
        log::warn!("ranking reply unusable; falling back to shortest-proof order");
    }
    // a partial ranking is completed in shortest-proof order
    for i in shortest {
        if chosen.len() >= width {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen.truncate(width);
    chosen
}

pub fn select_best(
    initial: &ProofState,
    candidates: &[SearchCandidate],
    width: usize,
    mode: SelectionMode,
    gateway: &Gateway,
) -> Vec<SearchCandidate> {
    select_best_indices(initial, candidates, width, mode, gateway).into_iter().map(|i| candidates[i].clone()).collect()
}

struct Branch {
    candidate: SearchCandidate,
    session: Box<dyn ProverSession>,
}

struct Expansion {
    children: Vec<Branch>,
    insights: Vec<String>,
    proved: Option<Vec<TraceEntry>>,
    exhausted: bool,
}

struct Searcher<'p, 'a> {
    params: &'p SearchParams,
    ports: &'p Ports<'a>,
    budget: Budget,
    initial: ProofState,
}

impl Searcher<'_, '_> {
    fn concepts(&self, state: &ProofState) -> Vec<(TokenId, &EntityRecord)> {
        let Some(port) = &self.ports.corpus else { return Vec::new() };
        extract_concepts(port.corpus, port.table, state, 1)
            .tokens
            .iter()
            .filter_map(|&id| port.corpus.record(id).map(|r| (id, r)))
            .collect()
    }

    fn retrieve(&self, query: &str, log: &mut ExpansionLog) -> (Vec<String>, Vec<String>) {
        let Some(port) = &self.ports.retrieval else { return (Vec::new(), Vec::new()) };
        // premises are shown as `name : statement`, tactics as the tactic alone
        let fetch = |kind, k| match port.index.retrieve(port.provider, query, k, kind) {
            Ok(hits) => hits
                .into_iter()
                .map(|h| if kind == PayloadKind::Premise { h.key } else { h.payload })
                .collect::<Vec<_>>(),
            Err(e) => {
                log::warn!("retrieval failed: {e}");
                Vec::new()
            }
        };
        let premises = fetch(PayloadKind::Premise, self.params.premise_k);
        let tactics = fetch(PayloadKind::Tactic, self.params.tactic_k);
        log.premises.extend(premises.iter().cloned());
        log.retrieved_tactics.extend(tactics.iter().cloned());
        (premises, tactics)
    }

    /// Executor call, with at most one information round-trip.
    fn generate(
        &self,
        inputs: &ProveInputs<'_>,
        strategy: &str,
        log: &mut ExpansionLog,
    ) -> Result<Vec<String>, GatewayError> {
        let prompt = render_prove_prompt(inputs, self.ports.config).rendered;
        let mut messages =
            vec![ChatMessage::system(format!("Planner strategy:\n{}", strategy.trim())), ChatMessage::user(prompt)];
        let gateway = self.ports.gateway;
        let reply = gateway.chat(ModelRole::Executor, messages.clone())?;
        let parsed = match parse_action_response(&reply) {
            ActionResponse::InfoRequest(names) => {
                log.info_requests.extend(names.iter().cloned());
                let answers: Vec<(String, Option<&EntityRecord>)> = names
                    .iter()
                    .map(|n| {
                        let record = self.ports.corpus.as_ref().and_then(|c| c.corpus.find(c.table, n)).map(|(_, r)| r);
                        (n.clone(), record)
                    })
                    .collect();
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(render_info_prompt(&answers)));
                parse_action_response(&gateway.chat(ModelRole::Executor, messages)?)
            }
            other => other,
        };
        Ok(match parsed {
            ActionResponse::TacticSuggestions { items, .. } => {
                items.into_iter().map(|s| s.tactic).take(self.params.tactics_per_state).collect()
            }
            ActionResponse::InfoRequest(_) => {
                log::warn!("executor asked for information twice; no tactics this round");
                Vec::new()
            }
            ActionResponse::Unparsed(raw) => {
                log::warn!("executor reply not understood: {}", raw.chars().take(200).collect::<String>());
                Vec::new()
            }
        })
    }

    fn expand(
        &self,
        branch: &mut Branch,
        notebook: &Notebook,
        depth: usize,
        log: &mut ExpansionLog,
    ) -> Result<Expansion, String> {
        let state = branch.candidate.state.clone();
        let trace = branch.candidate.trace.clone();
        let concepts = self.concepts(&state);
        let mut inputs = ProveInputs::new(&state);
        inputs.concepts = concepts;
        inputs.trace = &trace;
        inputs.summary = &branch.candidate.summary;
        inputs.notes = notebook.items();

        let planner = |failures: &[FailedTactic]| {
            self.ports.gateway.ask(ModelRole::Planner, &render_planner_prompt(&inputs, self.ports.config, failures))
        };
        let strategy = planner(&[]).map_err(|e| format!("planner: {e}"))?;
        log.strategies.push(strategy.clone());
        let (premises, tactics) = self.retrieve(&strategy, log);
        let mut prove_inputs = inputs.clone();
        prove_inputs.premises = premises;
        prove_inputs.tactics = tactics;
        let candidates = self.generate(&prove_inputs, &strategy, log).map_err(|e| format!("executor: {e}"))?;

        let mut seen: HashSet<String> = HashSet::new();
        let mut valid: Vec<(String, ProofState)> = Vec::new();
        let mut failed: Vec<FailedTactic> = Vec::new();
        let mut exhausted = false;
        let mut validate = |batch: Vec<String>,
                            round: usize,
                            valid: &mut Vec<(String, ProofState)>,
                            failed: &mut Vec<FailedTactic>,
                            exhausted: &mut bool,
                            log: &mut ExpansionLog|
         -> Result<(), String> {
            for tactic in batch {
                let tactic = tactic.trim().to_string();
                if !seen.insert(normalize_ws(&tactic)) {
                    continue;
                }
                if !self.budget.try_take() {
                    *exhausted = true;
                    return Ok(());
                }
                let result = branch.session.compile_tactic(&tactic, &state).map_err(|e| format!("backend: {e}"))?;
                match (result.success, result.state) {
                    (true, Some(next)) => {
                        log.attempts.push(Attempt { tactic: tactic.clone(), round, success: true, error: None });
                        valid.push((tactic, next));
                    }
                    (_, _) => {
                        let error = truncate_error(result.error.as_deref().unwrap_or("error"));
                        log.attempts.push(Attempt {
                            tactic: tactic.clone(),
                            round,
                            success: false,
                            error: Some(error.clone()),
                        });
                        failed.push(FailedTactic { tactic, error });
                    }
                }
            }
            Ok(())
        };
        validate(candidates, 0, &mut valid, &mut failed, &mut exhausted, log)?;

        let mut retry = 0;
        while retry < self.params.max_retries
            && !failed.is_empty()
            && valid.len() <= self.params.tactics_per_state
            && !exhausted
        {
            let strategy = planner(&failed).map_err(|e| format!("planner retry: {e}"))?;
            log.strategies.push(strategy.clone());
            let (premises, tactics) = self.retrieve(&strategy, log);
            let mut retry_inputs = inputs.clone();
            retry_inputs.premises = premises;
            retry_inputs.tactics = tactics;
            let batch = self.generate(&retry_inputs, &strategy, log).map_err(|e| format!("executor retry: {e}"))?;
            failed.clear();
            validate(batch, retry + 1, &mut valid, &mut failed, &mut exhausted, log)?;
            retry += 1;
        }
        log.retries = retry;

        let mut children = Vec::new();
        let mut insights = Vec::new();
        for (tactic, expected) in valid {
            let mut session = match branch.session.fork() {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("depth {depth}: cannot fork session: {e}");
                    continue;
                }
            };
            let mut next = match session.apply_tactic(&tactic) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("depth {depth}: `{tactic}` validated but failed to apply: {e}");
                    continue;
                }
            };
            if next != expected {
                log::debug!("depth {depth}: `{tactic}` applied to a state differing from its validation");
            }
            log.applied.push(tactic.clone());
            if is_goal_complete(&next) {
                let mut done = trace.clone();
                done.push(TraceEntry::new(tactic, ""));
                return Ok(Expansion { children, insights, proved: Some(done), exhausted });
            }
            if is_subgoal_complete(&state, &next) {
                match session.apply_tactic("idtac") {
                    Ok(refreshed) => next = refreshed,
                    Err(e) => log::debug!("idtac refresh failed: {e}"),
                }
            }
            let (explanation, summary) =
                explain_and_summarize(&self.initial, &state, &tactic, &next, &trace, self.ports.gateway);
            let mut child_trace = trace.clone();
            child_trace.push(TraceEntry::new(tactic, explanation.clone()));
            if !explanation.is_empty() {
                insights.push(explanation);
            }
            children.push(Branch {
                candidate: SearchCandidate {
                    state: next,
                    trace: child_trace,
                    summary: summary.text,
                    score: summary.score,
                },
                session,
            });
        }
        Ok(Expansion { children, insights, proved: None, exhausted })
    }
}

/// Run the search on `theorem` (with `requires` loaded first).
pub fn prove(
    theorem: &str,
    requires: &[String],
    params: &SearchParams,
    ports: &Ports<'_>,
) -> Result<ProofResult, SearchError> {
    params.validate()?;
    let session = ports
        .backend
        .open_session(theorem, requires)
        .map_err(|e| SearchError::PortFailure { context: "compiling the theorem".into(), message: e.to_string() })?;
    let initial = session.current_state().clone();
    let searcher = Searcher { params, ports, budget: Budget::new(params.budget), initial: initial.clone() };
    let finish = |outcome, depth, layers| ProofResult {
        outcome,
        tactic_evaluations_used: searcher.budget.used(),
        depth_reached: depth,
        layers,
    };
    if is_goal_complete(&initial) {
        return Ok(finish(Outcome::Proved(Vec::new()), 0, Vec::new()));
    }

    let mut notebook = Notebook::new();
    let mut layer = vec![Branch { candidate: SearchCandidate::root(initial.clone()), session }];
    let mut layers = Vec::new();
    for depth in 1..=params.max_depth {
        let mut next: Vec<Branch> = Vec::new();
        let mut insights = Vec::new();
        let mut log = LayerLog { depth, ..Default::default() };
        let mut port_failures = Vec::new();
        for branch in layer.iter_mut() {
            let mut xlog = ExpansionLog {
                state: state_fingerprint(&branch.candidate.state),
                trace: branch.candidate.trace.iter().map(|t| t.tactic.clone()).collect(),
                ..Default::default()
            };
            let result = searcher.expand(branch, &notebook, depth, &mut xlog);
            match result {
                Ok(expansion) => {
                    log.expansions.push(xlog);
                    if let Some(trace) = expansion.proved {
                        log.budget_used = searcher.budget.used();
                        layers.push(log);
                        return Ok(finish(Outcome::Proved(trace), depth, layers));
                    }
                    next.extend(expansion.children);
                    insights.extend(expansion.insights);
                    if expansion.exhausted {
                        log.children = next.len();
                        log.budget_used = searcher.budget.used();
                        layers.push(log);
                        return Ok(finish(Outcome::BudgetExhausted, depth, layers));
                    }
                }
                Err(reason) => {
                    log::warn!("depth {depth}: branch pruned: {reason}");
                    xlog.pruned = Some(reason.clone());
                    log.expansions.push(xlog);
                    port_failures.push(reason);
                }
            }
        }

        let mut fingerprints = BTreeSet::new();
        let before = next.len();
        let mut unique: Vec<Branch> = Vec::new();
        for b in next {
            let fp = state_fingerprint(&b.candidate.state);
            if fingerprints.insert(fp.clone()) {
                unique.push(b);
            } else if let Some(slot) = unique.iter_mut().find(|u| state_fingerprint(&u.candidate.state) == fp) {
                if b.candidate.trace.len() < slot.candidate.trace.len() {
                    *slot = b;
                }
            }
        }
        log.children = unique.len();
        log.duplicates = before - unique.len();
        log.budget_used = searcher.budget.used();

        if unique.is_empty() {
            layers.push(log);
            if port_failures.len() == layer.len() {
                return Err(SearchError::PortFailure {
                    context: format!("depth {depth}: every branch failed"),
                    message: port_failures.pop().unwrap_or_default(),
                });
            }
            return Ok(finish(Outcome::Failure, depth, layers));
        }

        if !insights.is_empty() {
            notebook = update_notebook(&initial, &insights, &notebook, ports.gateway);
        }
        log.notes = notebook.items().to_vec();

        layer = if unique.len() > params.beam_width {
            let candidates: Vec<SearchCandidate> = unique.iter().map(|b| b.candidate.clone()).collect();
            let keep =
                select_best_indices(&initial, &candidates, params.beam_width, params.selection_mode, ports.gateway);
            let mut slots: Vec<Option<Branch>> = unique.into_iter().map(Some).collect();
            keep.into_iter().filter_map(|i| slots[i].take()).collect()
        } else {
            unique
        };
        log.selected = layer.iter().map(|b| state_fingerprint(&b.candidate.state)).collect();
        layers.push(log);
    }
    Ok(finish(Outcome::Failure, params.max_depth, layers))
}
