//! Command-line interface.
//!
//! Exit codes: 0 success, 1 domain-level negative result (theorem not
//! proved, gateway or backend failure, unresolved lookup), 2 usage or input
//! format error.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[cfg(feature = "subprocess")]
use crate::backend::serapi::{SerapiBackend, SerapiConfig};
use crate::backend::synthetic::split_theorem;
use crate::backend::{ProverBackend, SyntheticBackend};
use crate::clarity::{
    pearson_r, render_table, render_tsv, run_configuration, sample_probes, ConfigurationReport, ProbeInput,
    UnjudgeablePolicy, DEFAULT_PROBES_PER_BUNDLE,
};
use crate::corpus::{
    extract_concepts, load_entity_corpus, load_proof_corpus, statement_requires, CorpusError, EntityCorpus,
    ProofCorpus, DEFAULT_CONCEPT_DEPTH,
};
use crate::gateway::{ChatModel, Gateway, GatewayConfig, HeuristicModel, HttpChatConfig, HttpChatModel, ScriptedModel};
use crate::model::{normalize_ws, EntityRecord, ProofState};
use crate::prompt::{render_planner_prompt, render_prove_prompt, state_text, InfoConfiguration, ProveInputs};
use crate::retrieval::{
    build_index, EmbeddingProvider, HttpEmbedding, MockEmbedding, PayloadKind, RetrievalIndex, TacticExample,
    DEFAULT_MOCK_DIM,
};
use crate::runlog::{
    load_records, log_file_name, render_summary_table, summarize, write_manifest, write_records, write_run_log,
    ReportError, RunManifest, RunRecord,
};
use crate::search::{prove, CorpusPort, Outcome, Ports, ProofResult, RetrievalPort, SearchParams, SelectionMode};
use crate::tokenizer::{TokenId, TokenTable};

const DEFAULT_OUT_DIR: &str = "prooforge-out";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Negative(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Negative(_) => 1,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Subprocess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GatewayKind {
    #[default]
    Mock,
    Http,
}

impl BackendKind {
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Synthetic => "synthetic",
            BackendKind::Subprocess => "subprocess",
        }
    }
}

impl GatewayKind {
    pub fn label(self) -> &'static str {
        match self {
            GatewayKind::Mock => "mock",
            GatewayKind::Http => "http",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prooforge", version, about = "Retrieval-augmented tactic search over a tokenized Coq corpus")]
pub struct Cli {
    /// Seed for mock models, mock embeddings and probe sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long, global = true, value_enum)]
    gateway: Option<GatewayKind>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate corpora, report counts and name coverage.
    Ingest {
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        proofs: Option<PathBuf>,
        /// Write the token table here.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Vocabulary size, or token ids for names.
    Vocab {
        #[arg(long, required_unless_present = "entities")]
        vocab: Option<PathBuf>,
        #[arg(long, conflicts_with = "vocab")]
        entities: Option<PathBuf>,
        /// Names to resolve; repeatable.
        #[arg(long)]
        lookup: Vec<String>,
    },
    /// Search for a proof of one theorem.
    Prove {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Prove every theorem of a list file.
    Bench {
        /// One theorem per line: a corpus name or `Theorem name : statement.`
        list: PathBuf,
        /// Theorems proved concurrently.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Clarity scores per information configuration.
    Clarity {
        /// Theorems whose proving prompts supply the probed concepts.
        list: PathBuf,
        /// Comma-separated configuration slugs, or `all`.
        #[arg(long, default_value = "all")]
        configs: String,
        /// Concepts probed per prompt bundle.
        #[arg(long)]
        per_bundle: Option<usize>,
        /// How probes without YES/NO logprobs are scored.
        #[arg(long, value_enum)]
        unjudgeable: Option<UnjudgeableArg>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Aggregate run summaries; correlate with clarity scores when given.
    Report {
        /// Run directories or `runs.jsonl` files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Clarity TSV as written by `clarity`.
        #[arg(long)]
        clarity: Option<PathBuf>,
    },
    /// Print the prompt the first expansion of a theorem would send.
    DumpPrompt {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "prove")]
        kind: PromptKind,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PromptKind {
    Prove,
    Planner,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnjudgeableArg {
    Exclude,
    Half,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// Provable entity of the corpus.
    #[arg(long)]
    theorem: Option<String>,
    /// Statement to prove, in surface syntax.
    #[arg(long)]
    statement: Option<String>,
}

#[derive(Debug, Args, Default)]
struct RunArgs {
    /// Entity corpus (JSON lines).
    #[arg(long)]
    entities: Option<PathBuf>,
    /// Proof corpus; its tactics feed retrieval.
    #[arg(long)]
    proofs: Option<PathBuf>,
    /// Output directory (default `prooforge-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Information configuration slug, e.g. `complete` or `no-context`.
    #[arg(long)]
    info_config: Option<String>,
    /// Scripted gateway replies (JSON lines).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Directory of per-theorem scripts named `<theorem>.jsonl`.
    #[arg(long)]
    script_dir: Option<PathBuf>,
    /// Tactic-evaluation budget; derived from the other limits when omitted.
    #[arg(long)]
    budget: Option<usize>,
    /// Maximum search depth D.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Beam width B.
    #[arg(long)]
    beam_width: Option<usize>,
    /// Error-feedback retries per expansion R.
    #[arg(long)]
    max_retries: Option<usize>,
    /// Tactics requested per state t.
    #[arg(long)]
    tactics_per_state: Option<usize>,
    /// `model-based` or `shortest-proof`.
    #[arg(long)]
    selection: Option<String>,
}

/// Per-role chat endpoints; executor and judge default to the planner's.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSection {
    pub planner: HttpChatConfig,
    pub executor: Option<HttpChatConfig>,
    pub judge: Option<HttpChatConfig>,
    pub embedding: Option<EmbeddingEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingEndpoint {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for EmbeddingEndpoint {
    fn default() -> Self {
        EmbeddingEndpoint {
            base_url: "http://localhost:8000/v1".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: crate::gateway::DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    pub script: Option<PathBuf>,
    pub script_dir: Option<PathBuf>,
    pub embedding_dim: usize,
}

impl Default for MockSection {
    fn default() -> Self {
        MockSection { script: None, script_dir: None, embedding_dim: DEFAULT_MOCK_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaritySection {
    pub per_bundle: usize,
    pub unjudgeable: UnjudgeablePolicy,
    pub workers: usize,
}

impl Default for ClaritySection {
    fn default() -> Self {
        ClaritySection { per_bundle: DEFAULT_PROBES_PER_BUNDLE, unjudgeable: UnjudgeablePolicy::Exclude, workers: 4 }
    }
}

/// Everything a run needs besides the theorem. Credentials never appear
/// here; endpoint sections only name the environment variable to read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub backend: BackendKind,
    pub gateway: GatewayKind,
    pub info_config: InfoConfiguration,
    pub entities: Option<PathBuf>,
    pub proofs: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Theorems proved concurrently by `bench`.
    pub jobs: Option<usize>,
    pub search: SearchParams,
    pub limits: GatewayConfig,
    pub http: HttpSection,
    #[cfg(feature = "subprocess")]
    pub subprocess: SerapiConfig,
    pub mock: MockSection,
    pub clarity: ClaritySection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // an absent budget follows the file's own search parameters
        let value: toml::Table = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let explicit = value.get("search").and_then(|s| s.get("budget")).is_some();
        if !explicit {
            cfg.search.budget = crate::search::compute_budget(&cfg.search);
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.entities, &mut cfg.proofs, &mut cfg.out_dir, &mut cfg.mock.script, &mut cfg.mock.script_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Mock models, mock embeddings and probe sampling are seeded.
    fn needs_seed(&self, sampling: bool) -> bool {
        sampling || self.gateway == GatewayKind::Mock || self.http.embedding.is_none()
    }

    fn seed(&self, sampling: bool) -> Result<u64, CliError> {
        match self.seed {
            Some(s) => Ok(s),
            None if self.needs_seed(sampling) => Err(usage(
                "a seed is required for mock models, mock embeddings and sampling (--seed or `seed` in the config)",
            )),
            None => Ok(0),
        }
    }

    fn apply(&mut self, run: &RunArgs) -> Result<(), CliError> {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        if run.entities.is_some() {
            self.entities = run.entities.clone();
        }
        if run.proofs.is_some() {
            self.proofs = run.proofs.clone();
        }
        if run.out.is_some() {
            self.out_dir = run.out.clone();
        }
        if run.script.is_some() {
            self.mock.script = run.script.clone();
        }
        if run.script_dir.is_some() {
            self.mock.script_dir = run.script_dir.clone();
        }
        if let Some(slug) = &run.info_config {
            self.info_config = slug.parse().map_err(usage)?;
        }
        if let Some(mode) = &run.selection {
            self.search.selection_mode = mode.parse::<SelectionMode>().map_err(usage)?;
        }
        let derived = self.search.budget == crate::search::compute_budget(&self.search);
        set!(run.max_depth => self.search.max_depth);
        set!(run.beam_width => self.search.beam_width);
        set!(run.max_retries => self.search.max_retries);
        set!(run.tactics_per_state => self.search.tactics_per_state);
        if derived {
            self.search.budget = crate::search::compute_budget(&self.search);
        }
        set!(run.budget => self.search.budget);
        Ok(())
    }
}

/// Loaded corpora plus the retrieval index built from them.
struct Workspace {
    config: RunConfig,
    seed: u64,
    table: TokenTable,
    entities: Option<EntityCorpus>,
    proofs: Option<ProofCorpus>,
    provider: Box<dyn EmbeddingProvider>,
    index: Option<RetrievalIndex>,
}

/// A theorem to prove.
#[derive(Debug, Clone)]
struct Goal {
    name: String,
    statement: String,
    record: Option<TokenId>,
}

impl Workspace {
    fn open(config: RunConfig, sampling: bool) -> Result<Self, CliError> {
        let seed = config.seed(sampling)?;
        let mut table = TokenTable::new();
        let entities = match &config.entities {
            Some(p) => Some(load_entity_corpus(p, &mut table).map_err(|e| corpus_error(p, e))?),
            None => None,
        };
        let proofs = match &config.proofs {
            Some(p) => Some(load_proof_corpus(p).map_err(|e| corpus_error(p, e))?),
            None => None,
        };
        let provider: Box<dyn EmbeddingProvider> = match (&config.gateway, &config.http.embedding) {
            (GatewayKind::Http, Some(ep)) => Box::new(HttpEmbedding::new(
                &ep.base_url,
                &ep.model,
                std::env::var(&ep.api_key_env).ok().filter(|k| !k.is_empty()),
                Duration::from_secs(ep.timeout_secs),
            )),
            _ => Box::new(MockEmbedding::new(config.mock.embedding_dim, seed)),
        };
        let mut ws = Workspace { config, seed, table, entities, proofs, provider, index: None };
        ws.index = ws.build_index()?;
        Ok(ws)
    }

    fn build_index(&self) -> Result<Option<RetrievalIndex>, CliError> {
        let mut premises = Vec::new();
        if let Some(corpus) = &self.entities {
            for (_, r) in corpus.iter() {
                if r.kind.is_provable() {
                    premises.push((r.name.clone(), split_theorem(&r.origin).1));
                }
            }
        }
        let mut tactics = Vec::new();
        if let Some(proofs) = &self.proofs {
            for (tactic, before) in proofs.tactic_examples() {
                let goal = before.focused().map(|g| normalize_ws(&g.goal_surface)).unwrap_or_default();
                tactics.push(TacticExample { tactic: tactic.to_string(), goal });
            }
        }
        if premises.is_empty() && tactics.is_empty() {
            return Ok(None);
        }
        build_index(self.provider.as_ref(), &premises, &tactics)
            .map(Some)
            .map_err(|e| CliError::Negative(format!("building the retrieval index: {e}")))
    }

    fn backend(&self) -> Result<Box<dyn ProverBackend>, CliError> {
        match self.config.backend {
            BackendKind::Synthetic => Ok(Box::new(match &self.entities {
                Some(c) => SyntheticBackend::from_corpus(c),
                None => SyntheticBackend::new(),
            })),
            #[cfg(feature = "subprocess")]
            BackendKind::Subprocess => Ok(Box::new(SerapiBackend::new(self.config.subprocess.clone()))),
            #[cfg(not(feature = "subprocess"))]
            BackendKind::Subprocess => Err(usage("this build has no subprocess backend")),
        }
    }

    /// Fresh gateway for one theorem, so scripted runs never share state.
    fn gateway(&self, theorem: &str) -> Result<Gateway, CliError> {
        let gw = match self.config.gateway {
            GatewayKind::Mock => {
                let per_theorem = self.config.mock.script_dir.as_ref().map(|d| d.join(log_file_name(theorem)));
                let script = per_theorem.filter(|p| p.is_file()).or_else(|| self.config.mock.script.clone());
                let model: Arc<dyn ChatModel> = match script {
                    Some(p) => Arc::new(ScriptedModel::load(&p).map_err(usage)?),
                    None => Arc::new(HeuristicModel::new()),
                };
                Gateway::single(model)
            }
            GatewayKind::Http => {
                let http = &self.config.http;
                let planner = http.planner.clone();
                let model = |c: &Option<HttpChatConfig>| -> Arc<dyn ChatModel> {
                    Arc::new(HttpChatModel::new(c.clone().unwrap_or_else(|| planner.clone())))
                };
                Gateway::new(Arc::new(HttpChatModel::new(planner.clone())), model(&http.executor), model(&http.judge))
            }
        };
        Ok(gw.with_config(self.config.limits.clone()))
    }

    fn goal_by_name(&self, name: &str) -> Result<Goal, CliError> {
        let corpus = self.entities.as_ref().ok_or_else(|| usage(format!("{name}: no entity corpus given")))?;
        let (id, record) =
            corpus.find(&self.table, name).ok_or_else(|| usage(format!("{name}: not found in the entity corpus")))?;
        if !record.kind.is_provable() {
            return Err(usage(format!("{name}: a {} is not provable", record.kind.label())));
        }
        Ok(Goal { name: record.name.clone(), statement: split_theorem(&record.origin).1, record: Some(id) })
    }

    fn goal(&self, target: &Target) -> Result<Goal, CliError> {
        match (&target.theorem, &target.statement) {
            (Some(name), _) => self.goal_by_name(name),
            (None, Some(stmt)) => {
                let (name, statement) = split_theorem(stmt);
                Ok(Goal { name: name.unwrap_or_else(|| "goal".into()), statement, record: None })
            }
            (None, None) => Err(usage("give --theorem or --statement")),
        }
    }

    fn goals_from_list(&self, path: &Path) -> Result<Vec<Goal>, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let goal = if line.contains(char::is_whitespace) {
                let (name, statement) = split_theorem(line);
                Goal { name: name.unwrap_or_else(|| format!("line{}", i + 1)), statement, record: None }
            } else {
                self.goal_by_name(line).map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?
            };
            out.push(goal);
        }
        if out.is_empty() {
            return Err(usage(format!("{}: no theorems listed", path.display())));
        }
        Ok(out)
    }

    fn requires(&self, goal: &Goal) -> Vec<String> {
        let Some(corpus) = &self.entities else { return Vec::new() };
        let deps = goal.record.and_then(|id| corpus.record(id)).map(|r| r.dependencies.clone()).unwrap_or_default();
        statement_requires(corpus, &self.table, &goal.statement, &deps)
    }

    fn ports<'a>(&'a self, backend: &'a dyn ProverBackend, gateway: &'a Gateway) -> Ports<'a> {
        Ports {
            backend,
            gateway,
            retrieval: self.index.as_ref().map(|index| RetrievalPort { index, provider: self.provider.as_ref() }),
            corpus: self.entities.as_ref().map(|corpus| CorpusPort { corpus, table: &self.table }),
            config: self.config.info_config,
        }
    }

    fn manifest(&self, goals: &[Goal]) -> RunManifest {
        let mut m = RunManifest::new(
            self.seed,
            self.config.info_config,
            self.config.backend.label(),
            self.config.gateway.label(),
            &self.config.search,
        );
        m.entities = self.config.entities.as_ref().map(|p| p.display().to_string());
        m.proofs = self.config.proofs.as_ref().map(|p| p.display().to_string());
        m.theorems = goals.iter().map(|g| g.name.clone()).collect();
        m
    }

    fn out_dir(&self) -> PathBuf {
        self.config.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Prove one goal in isolation. Search failures become error records.
    fn run_goal(&self, goal: &Goal) -> (RunRecord, Option<ProofResult>) {
        let config = self.config.info_config;
        if self.config.search.budget == 0 {
            let result = ProofResult {
                outcome: Outcome::BudgetExhausted,
                tactic_evaluations_used: 0,
                depth_reached: 0,
                layers: Vec::new(),
            };
            return (RunRecord::from_result(&goal.name, config, &result), Some(result));
        }
        let attempt = || -> Result<ProofResult, String> {
            let backend = self.backend().map_err(|e| e.to_string())?;
            let gateway = self.gateway(&goal.name).map_err(|e| e.to_string())?;
            let requires = self.requires(goal);
            prove(&goal.statement, &requires, &self.config.search, &self.ports(backend.as_ref(), &gateway))
                .map_err(|e| e.to_string())
        };
        match attempt() {
            Ok(result) => (RunRecord::from_result(&goal.name, config, &result), Some(result)),
            Err(e) => (RunRecord::from_error(&goal.name, config, &e), None),
        }
    }

    fn initial_state(&self, goal: &Goal) -> Result<ProofState, CliError> {
        let backend = self.backend()?;
        let session = backend
            .open_session(&goal.statement, &self.requires(goal))
            .map_err(|e| CliError::Negative(format!("{}: {e}", goal.name)))?;
        Ok(session.current_state().clone())
    }

    fn concepts<'a>(&'a self, state: &ProofState) -> Vec<(TokenId, &'a EntityRecord)> {
        let Some(corpus) = &self.entities else { return Vec::new() };
        extract_concepts(corpus, &self.table, state, DEFAULT_CONCEPT_DEPTH)
            .tokens
            .iter()
            .filter_map(|&id| corpus.record(id).map(|r| (id, r)))
            .collect()
    }
}

fn corpus_error(path: &Path, e: CorpusError) -> CliError {
    match e {
        CorpusError::Io { .. } => usage(e),
        other => usage(format!("{}: {other}", path.display())),
    }
}

/// A finished bench theorem: its record and, when the search ran, the result.
type BenchSlot = (RunRecord, Option<ProofResult>);

fn outcome_name(result: &ProofResult) -> &'static str {
    match result.outcome {
        Outcome::Proved(_) => "Proved",
        Outcome::Failure => "Failure",
        Outcome::BudgetExhausted => "BudgetExhausted",
    }
}

fn write_logs(dir: &Path, runs: &[(RunRecord, Option<ProofResult>)]) -> Result<(), CliError> {
    let io = |e: std::io::Error| usage(format!("{}: {e}", dir.display()));
    let logs = dir.join("logs");
    std::fs::create_dir_all(&logs).map_err(io)?;
    for (record, result) in runs {
        let file = std::fs::File::create(logs.join(log_file_name(&record.theorem))).map_err(io)?;
        write_run_log(std::io::BufWriter::new(file), record, result.as_ref()).map_err(io)?;
    }
    let records: Vec<RunRecord> = runs.iter().map(|(r, _)| r.clone()).collect();
    write_records(&dir.join("runs.jsonl"), &records).map_err(io)
}

fn cmd_ingest(entities: &Path, proofs: Option<&Path>, vocab_out: Option<&Path>) -> Result<i32, CliError> {
    let mut table = TokenTable::new();
    let corpus = load_entity_corpus(entities, &mut table).map_err(|e| corpus_error(entities, e))?;
    let proof_corpus = match proofs {
        Some(p) => Some(load_proof_corpus(p).map_err(|e| corpus_error(p, e))?),
        None => None,
    };
    let terms: Vec<String> = corpus.iter().map(|(_, r)| r.internal.clone()).collect();
    let mut coverage = table.coverage_report(&terms, corpus.resolution_context());
    if let Some(pc) = &proof_corpus {
        // hypotheses are locals of their own goal
        for goal in pc.proofs.iter().flat_map(|p| &p.steps).flat_map(|s| &s.before.goals) {
            let ctx = goal
                .hypotheses_internal
                .iter()
                .fold(corpus.resolution_context().clone(), |c, h| c.with_local(h.name.clone(), h.ty.clone()));
            let part = table.coverage_report(std::slice::from_ref(&goal.goal_internal), &ctx);
            let resolved = coverage.resolved_fraction * coverage.identifier_count as f64
                + part.resolved_fraction * part.identifier_count as f64;
            let resolved = resolved.round();
            coverage.identifier_count += part.identifier_count;
            coverage.resolved_fraction =
                if coverage.identifier_count == 0 { 1.0 } else { resolved / coverage.identifier_count as f64 };
            for (lexeme, n) in part.unresolved_lexemes {
                *coverage.unresolved_lexemes.entry(lexeme).or_default() += n;
            }
        }
    }
    let synthesized = (0..corpus.len()).filter(|&i| corpus.is_synthesized(i)).count();
    println!("entities: {} ({} synthesized)", corpus.len(), synthesized);
    println!("source files: {}", corpus.source_files().count());
    println!("dangling dependencies: {}", corpus.dangling_dependencies());
    if let Some(pc) = &proof_corpus {
        let steps: usize = pc.proofs.iter().map(|p| p.steps.len()).sum();
        println!("proofs: {} ({} steps)", pc.len(), steps);
    }
    println!("tokens: {}", table.len());
    println!(
        "coverage: {:.4} ({} identifiers, {} unresolved names)",
        coverage.resolved_fraction,
        coverage.identifier_count,
        coverage.unresolved_lexemes.len()
    );
    for (lexeme, count) in &coverage.unresolved_lexemes {
        log::info!("unresolved: {lexeme} ({count}x)");
    }
    if let Some(path) = vocab_out {
        let file = std::fs::File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        table.write_vocab(std::io::BufWriter::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        println!("vocabulary written to {}", path.display());
    }
    Ok(0)
}

fn cmd_vocab(vocab: Option<&Path>, entities: Option<&Path>, lookup: &[String]) -> Result<i32, CliError> {
    let (table, context) = match (vocab, entities) {
        (Some(p), _) => {
            let file = std::fs::File::open(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let table =
                TokenTable::read_vocab(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            (table, Default::default())
        }
        (None, Some(p)) => {
            let mut table = TokenTable::new();
            let corpus = load_entity_corpus(p, &mut table).map_err(|e| corpus_error(p, e))?;
            let ctx = corpus.resolution_context().clone();
            (table, ctx)
        }
        (None, None) => return Err(usage("give --vocab or --entities")),
    };
    if lookup.is_empty() {
        println!("tokens: {}", table.len());
        return Ok(0);
    }
    let mut missing = 0;
    for name in lookup {
        match table.resolve_name(name, &context) {
            Some(id) => {
                let shown = table.name_of(id).map(|n| n.render()).unwrap_or_default();
                println!("{name}\t{id}\t{shown}");
            }
            None => {
                println!("{name}\tunresolved");
                missing += 1;
            }
        }
    }
    Ok(if missing == 0 { 0 } else { 1 })
}

fn cmd_prove(ws: &Workspace, target: &Target) -> Result<i32, CliError> {
    let goal = ws.goal(target)?;
    if ws.config.search.budget != 0 {
        ws.config.search.validate().map_err(usage)?;
    }
    let (record, result) = ws.run_goal(&goal);
    let dir = ws.out_dir();
    write_manifest(&dir, &ws.manifest(std::slice::from_ref(&goal)))
        .map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    write_logs(&dir, &[(record.clone(), result.clone())])?;
    let Some(result) = result else {
        eprintln!("error: {}", record.error.as_deref().unwrap_or("search failed"));
        return Ok(1);
    };
    println!("{}", outcome_name(&result));
    if let Some(trace) = result.trace() {
        for entry in trace {
            println!("  {}", entry.tactic);
        }
    }
    println!("depth: {}", result.depth_reached);
    println!("evaluations: {}", result.tactic_evaluations_used);
    Ok(if result.is_proved() { 0 } else { 1 })
}

fn cmd_bench(ws: &Workspace, list: &Path, jobs: usize) -> Result<i32, CliError> {
    let goals = ws.goals_from_list(list)?;
    if ws.config.search.budget != 0 {
        ws.config.search.validate().map_err(usage)?;
    }
    let slots: Vec<Mutex<Option<BenchSlot>>> = goals.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(goals.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(goal) = goals.get(i) else { return };
                let run = ws.run_goal(goal);
                log::info!("{}: {}", goal.name, run.0.outcome);
                *slots[i].lock().expect("slot poisoned") = Some(run);
            });
        }
    });
    let runs: Vec<(RunRecord, Option<ProofResult>)> =
        slots.into_iter().map(|s| s.into_inner().expect("slot poisoned").expect("every goal ran")).collect();
    let dir = ws.out_dir();
    write_manifest(&dir, &ws.manifest(&goals)).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    write_logs(&dir, &runs)?;
    for (record, _) in &runs {
        match &record.error {
            Some(e) => println!("{}\terror\t{e}", record.theorem),
            None => println!("{}\t{}\t{}\t{}", record.theorem, record.outcome, record.depth, record.evaluations),
        }
    }
    let records: Vec<RunRecord> = runs.into_iter().map(|(r, _)| r).collect();
    print!("{}", render_summary_table(&summarize(&records)));
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    Ok(if errors == 0 { 0 } else { 1 })
}

fn parse_configs(list: &str) -> Result<Vec<InfoConfiguration>, CliError> {
    if list.trim() == "all" {
        return Ok(InfoConfiguration::ALL.to_vec());
    }
    list.split(',').map(|s| s.trim().parse::<InfoConfiguration>().map_err(usage)).collect()
}

fn cmd_clarity(ws: &Workspace, list: &Path, configs: &[InfoConfiguration]) -> Result<i32, CliError> {
    let corpus = ws.entities.as_ref().ok_or_else(|| usage("clarity needs an entity corpus (--entities)"))?;
    let goals = ws.goals_from_list(list)?;
    let states: Vec<ProofState> = goals.iter().map(|g| ws.initial_state(g)).collect::<Result<_, _>>()?;
    let concepts: Vec<Vec<(TokenId, &EntityRecord)>> = states.iter().map(|s| ws.concepts(s)).collect();
    let settings = &ws.config.clarity;
    let mut reports: Vec<ConfigurationReport> = Vec::new();
    for &config in configs {
        let bundles: Vec<_> = states
            .iter()
            .zip(&concepts)
            .map(|(state, cs)| {
                let mut inputs = ProveInputs::new(state);
                inputs.concepts = cs.clone();
                render_prove_prompt(&inputs, config)
            })
            .collect();
        let targets = sample_probes(&bundles, settings.per_bundle, ws.seed);
        let inputs: Vec<ProbeInput<'_>> = targets
            .iter()
            .filter_map(|t| {
                corpus.record(t.concept).map(|reference| ProbeInput {
                    bundle: &bundles[t.bundle],
                    concept: t.concept,
                    name: t.name.clone(),
                    reference,
                })
            })
            .collect();
        let gateway = ws.gateway(&format!("clarity-{}", config.slug()))?;
        reports.push(run_configuration(config, &inputs, &gateway, settings.unjudgeable, settings.workers));
    }
    let dir = ws.out_dir();
    let io = |e: std::io::Error| usage(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(&dir).map_err(io)?;
    let table = render_table(&reports);
    std::fs::write(dir.join("clarity.txt"), &table).map_err(io)?;
    std::fs::write(dir.join("clarity.tsv"), render_tsv(&reports)).map_err(io)?;
    let mut probes = String::new();
    for report in &reports {
        for p in &report.probes {
            probes.push_str(&serde_json::to_string(p).map_err(|e| usage(e.to_string()))?);
            probes.push('\n');
        }
    }
    std::fs::write(dir.join("probes.jsonl"), probes).map_err(io)?;
    print!("{table}");
    let incomplete: Vec<String> =
        reports.iter().filter_map(|r| r.incomplete.as_ref().map(|e| format!("{}: {e}", r.config.slug()))).collect();
    for e in &incomplete {
        eprintln!("incomplete: {e}");
    }
    Ok(if incomplete.is_empty() { 0 } else { 1 })
}

fn cmd_report(runs: &[PathBuf], clarity: Option<&Path>) -> Result<i32, CliError> {
    for p in runs {
        if !p.exists() {
            return Err(usage(format!("{}: no such file or directory", p.display())));
        }
    }
    let records = load_records(runs).map_err(|e| match e {
        ReportError::Io(e) => usage(e),
        other => usage(other),
    })?;
    let rows = summarize(&records);
    print!("{}", render_summary_table(&rows));
    let Some(path) = clarity else { return Ok(0) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let scores = crate::clarity::parse_tsv(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|row| scores.iter().find(|(c, _)| *c == row.config).map(|(_, s)| (*s, row.success_rate)))
        .collect();
    if pairs.len() < 2 {
        println!("correlation skipped: {} configuration(s) with both clarity and success rate", pairs.len());
        return Ok(0);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    match pearson_r(&xs, &ys) {
        Ok(r) => println!("pearson r (clarity vs success rate, n={}): {r:.4}", xs.len()),
        Err(e) => println!("correlation skipped: {e}"),
    }
    Ok(0)
}

fn cmd_dump_prompt(ws: &Workspace, target: &Target, kind: PromptKind) -> Result<i32, CliError> {
    let goal = ws.goal(target)?;
    let state = ws.initial_state(&goal)?;
    let mut inputs = ProveInputs::new(&state);
    inputs.concepts = ws.concepts(&state);
    if let Some(index) = &ws.index {
        let query = state_text(&state, false);
        let k = &ws.config.search;
        let hits = |n, kind| {
            index.retrieve(ws.provider.as_ref(), &query, n, kind).map_err(|e| CliError::Negative(e.to_string()))
        };
        inputs.premises = hits(k.premise_k, PayloadKind::Premise)?.into_iter().map(|h| h.key).collect();
        inputs.tactics = hits(k.tactic_k, PayloadKind::Tactic)?.into_iter().map(|h| h.payload).collect();
    }
    let text = match kind {
        PromptKind::Prove => render_prove_prompt(&inputs, ws.config.info_config).rendered,
        PromptKind::Planner => render_planner_prompt(&inputs, ws.config.info_config, &[]),
    };
    print!("{text}");
    Ok(0)
}

fn run_cli(cli: Cli) -> Result<i32, CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Some(b) = cli.backend {
        config.backend = b;
    }
    if let Some(g) = cli.gateway {
        config.gateway = g;
    }
    match &cli.command {
        Command::Ingest { entities, proofs, vocab_out } => {
            cmd_ingest(entities, proofs.as_deref(), vocab_out.as_deref())
        }
        Command::Vocab { vocab, entities, lookup } => cmd_vocab(vocab.as_deref(), entities.as_deref(), lookup),
        Command::Prove { target, run } => {
            config.apply(run)?;
            cmd_prove(&Workspace::open(config, false)?, target)
        }
        Command::Bench { list, jobs, run } => {
            config.apply(run)?;
            let jobs = jobs.or(config.jobs).unwrap_or(1);
            cmd_bench(&Workspace::open(config, false)?, list, jobs)
        }
        Command::Clarity { list, configs, per_bundle, unjudgeable, run } => {
            config.apply(run)?;
            if let Some(n) = per_bundle {
                config.clarity.per_bundle = *n;
            }
            match unjudgeable {
                Some(UnjudgeableArg::Exclude) => config.clarity.unjudgeable = UnjudgeablePolicy::Exclude,
                Some(UnjudgeableArg::Half) => config.clarity.unjudgeable = UnjudgeablePolicy::Half,
                None => {}
            }
            let configs = parse_configs(configs)?;
            cmd_clarity(&Workspace::open(config, true)?, list, &configs)
        }
        Command::Report { runs, clarity } => cmd_report(runs, clarity.as_deref()),
        Command::DumpPrompt { target, kind, run } => {
            config.apply(run)?;
            cmd_dump_prompt(&Workspace::open(config, false)?, target, *kind)
        }
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_round_trip_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 7\ninfo_config = \"origin-only\"\nentities = \"e.jsonl\"\n[search]\nmax_depth = 4\nbudget = 100\n[mock]\nscript = \"s.jsonl\"\n",
        )
        .unwrap();
        let mut cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.info_config, InfoConfiguration::OriginOnly);
        assert_eq!(cfg.entities.as_deref(), Some(dir.path().join("e.jsonl").as_path()));
        assert_eq!(cfg.search.budget, 100);
        cfg.apply(&RunArgs { beam_width: Some(1), info_config: Some("complete".into()), ..Default::default() })
            .unwrap();
        // an explicit budget is kept when other parameters change
        assert_eq!(cfg.search.budget, 100);
        assert_eq!(cfg.info_config, InfoConfiguration::Complete);

        let mut default = RunConfig::default();
        default.apply(&RunArgs { max_depth: Some(2), ..Default::default() }).unwrap();
        assert_eq!(default.search.budget, 20 + 3 * 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "api_key = \"secret\"\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn seed_is_required_for_mocks() {
        let cfg = RunConfig::default();
        assert!(cfg.seed(false).is_err());
        let cfg = RunConfig { seed: Some(1), ..Default::default() };
        assert_eq!(cfg.seed(true).unwrap(), 1);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["prooforge", "prove"]), 2);
        assert_eq!(run(["prooforge", "frobnicate"]), 2);
        assert_eq!(run(["prooforge", "--seed", "1", "prove", "--statement", "1 = 1", "--info-config", "bogus"]), 2);
    }

    #[test]
    fn configs_parse() {
        assert_eq!(parse_configs("all").unwrap().len(), 11);
        assert_eq!(
            parse_configs("no-context,complete").unwrap(),
            [InfoConfiguration::NoContext, InfoConfiguration::Complete]
        );
        assert!(parse_configs("nope").is_err());
    }
}
