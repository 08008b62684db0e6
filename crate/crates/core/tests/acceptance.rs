//! Acceptance checks. Prints one PASS/FAIL line per criterion, then fails the
//! test if any criterion failed. The lines bypass output capture, so a plain
//! `cargo test --test acceptance` shows them.

// comparisons are negated on purpose so NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use prooforge::backend::{
    is_goal_complete, replay, BackendError, CompileResult, ProverBackend, ProverSession, SyntheticBackend,
};
use prooforge::clarity::{clarity_score, pearson_r};
use prooforge::corpus::{
    load_entity_corpus, load_proof_corpus, parse_entity_corpus, parse_proof_corpus, statement_requires,
    write_entity_corpus, write_proof_corpus,
};
use prooforge::gateway::{Gateway, ScriptEntry, ScriptedModel, YesNoLogprobs};
use prooforge::model::{validate_proof_chain, ProofState};
use prooforge::prompt::{markers, InfoConfiguration, Section};
use prooforge::search::{compute_budget, prove, CorpusPort, Outcome, Ports, SearchParams, SelectionMode};
use prooforge::tokenizer::{DisambiguatedName, ResolutionContext, TokenId, TokenTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BUDGET_RUNS: usize = 200;
const CLARITY_PAIRS: usize = 10_000;
const CLARITY_TOL: f64 = 1e-12;
const PEARSON_TARGET: f64 = 0.98;
const PEARSON_TOL: f64 = 0.01;
const TOKENIZER_CASES: usize = 10_000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("budget formula and bound", budget, Duration::from_secs(60)),
        ("clarity formula", clarity, Duration::from_secs(10)),
        ("correlation reproduction", correlation, Duration::from_secs(1)),
        ("tokenizer semantic consistency", tokenizer, Duration::from_secs(120)),
        ("prompt fidelity", prompts, Duration::from_secs(60)),
        ("search conformance on the fixture suite", suite, Duration::from_secs(120)),
        ("end-to-end determinism", determinism, Duration::from_secs(120)),
        ("corpus round trip", round_trip, Duration::from_secs(30)),
    ];
    let mut failed = Vec::new();
    let _ = writeln!(std::io::stdout().lock());
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        let line = match outcome {
            Ok(detail) => format!("PASS {name}: {detail} ({elapsed:.2?})"),
            Err(why) => {
                failed.push(name);
                format!("FAIL {name}: {why} ({elapsed:.2?})")
            }
        };
        // straight to the handle so the line shows without --nocapture
        let _ = writeln!(std::io::stdout().lock(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- budget

/// Counts `compile_tactic` calls across a session and all of its forks.
struct Counting<'a> {
    inner: &'a dyn ProverBackend,
    calls: Arc<AtomicUsize>,
}

struct CountingSession {
    inner: Box<dyn ProverSession>,
    calls: Arc<AtomicUsize>,
}

impl ProverBackend for Counting<'_> {
    fn name(&self) -> &str {
        "counting"
    }

    fn compile_theorem(&self, theorem_source: &str, requires: &[String]) -> CompileResult {
        self.inner.compile_theorem(theorem_source, requires)
    }

    fn open_session(&self, theorem_source: &str, requires: &[String]) -> Result<Box<dyn ProverSession>, BackendError> {
        let inner = self.inner.open_session(theorem_source, requires)?;
        Ok(Box::new(CountingSession { inner, calls: self.calls.clone() }))
    }
}

impl ProverSession for CountingSession {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn theorem(&self) -> &str {
        self.inner.theorem()
    }

    fn current_state(&self) -> &ProofState {
        self.inner.current_state()
    }

    fn transcript(&self) -> &[String] {
        self.inner.transcript()
    }

    fn compile_tactic(&mut self, tactic: &str, state: &ProofState) -> Result<CompileResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.compile_tactic(tactic, state)
    }

    fn apply_tactic(&mut self, tactic: &str) -> Result<ProofState, BackendError> {
        self.inner.apply_tactic(tactic)
    }

    fn fork(&self) -> Result<Box<dyn ProverSession>, BackendError> {
        Ok(Box::new(CountingSession { inner: self.inner.fork()?, calls: self.calls.clone() }))
    }
}

const TACTIC_POOL: &[&str] = &[
    "intros",
    "intros n",
    "intro H",
    "simpl",
    "reflexivity",
    "trivial",
    "auto",
    "split",
    "left",
    "right",
    "induction n",
    "rewrite plus_n_O",
    "assumption",
    "constructor",
    "exact I",
    "bogus",
    "apply nonsense",
    "omega",
];

fn random_reply(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..=12);
    let tactics: Vec<serde_json::Value> = (0..n)
        .map(|_| serde_json::json!({"tactic": TACTIC_POOL[rng.random_range(0..TACTIC_POOL.len())], "reason": "r"}))
        .collect();
    serde_json::json!({ "tactics": tactics }).to_string()
}

fn random_script(rng: &mut ChaCha8Rng) -> ScriptedModel {
    let mut entries = Vec::new();
    for _ in 0..rng.random_range(1..30) {
        if rng.random_bool(0.1) {
            entries.push(ScriptEntry::reply(r#"{"info": ["nat", "Coq.Init.Nat.add"]}"#).when(markers::PROVE));
        }
        entries.push(ScriptEntry::reply(random_reply(rng)).when(markers::PROVE));
    }
    entries.push(ScriptEntry::reply(random_reply(rng)).when(markers::PROVE).repeating());
    // the follow-up turn after an info request
    entries.push(ScriptEntry::reply(random_reply(rng)).when(markers::INFO).repeating());
    let ranking: Vec<usize> = (0..6).map(|_| rng.random_range(0..8)).collect();
    entries.extend([
        ScriptEntry::reply(serde_json::json!({ "ranking": ranking }).to_string()).when(markers::RANK).repeating(),
        ScriptEntry::reply("Strategy: simplify.").when(markers::PLANNER).repeating(),
        ScriptEntry::reply("Explained.").when(markers::EXPLAIN).repeating(),
        ScriptEntry::reply(format!("Progress.\nScore: {:.2}", rng.random::<f64>())).when(markers::SUMMARY).repeating(),
        ScriptEntry::reply(r#"{"notes": ["n"]}"#).when(markers::NOTES).repeating(),
    ]);
    ScriptedModel::new(entries)
}

fn budget() -> Check {
    let defaults = SearchParams::default();
    // 1·t·r for the root plus (D−1)·B·t·r for deeper layers
    let oracle = |p: &SearchParams| {
        let tr = p.tactics_per_state * p.reconsider_factor;
        tr + (p.max_depth - 1) * p.beam_width * tr
    };
    ensure!(compute_budget(&defaults) == 860, "compute_budget(defaults) = {}", compute_budget(&defaults));
    ensure!(defaults.budget == 860 && oracle(&defaults) == 860, "default budget {}", defaults.budget);

    let (table, corpus) = common::corpus();
    let backend = SyntheticBackend::from_corpus(&corpus);
    let statements: Vec<String> = common::suite().into_iter().map(|(_, s, _)| s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(common::SEED);
    let (mut proved, mut exhausted, mut max_used) = (0, 0, 0);
    for run in 0..BUDGET_RUNS {
        let mut p = SearchParams {
            max_depth: rng.random_range(1..=15),
            beam_width: rng.random_range(1..=4),
            max_retries: rng.random_range(0..=3),
            tactics_per_state: rng.random_range(1..=10),
            reconsider_factor: rng.random_range(1..=3),
            selection_mode: if rng.random_bool(0.5) { SelectionMode::ModelBased } else { SelectionMode::ShortestProof },
            ..SearchParams::default()
        };
        ensure!(compute_budget(&p) == oracle(&p), "budget formula differs for {p:?}");
        p.budget = if rng.random_bool(0.6) {
            compute_budget(&p)
        } else {
            rng.random_range(p.tactics_per_state..=compute_budget(&p))
        };
        let statement = &statements[rng.random_range(0..statements.len())];
        let calls = Arc::new(AtomicUsize::new(0));
        let counting = Counting { inner: &backend, calls: calls.clone() };
        let gateway = Gateway::single(Arc::new(random_script(&mut rng)));
        let ports = Ports {
            backend: &counting,
            gateway: &gateway,
            retrieval: None,
            corpus: Some(CorpusPort { corpus: &corpus, table: &table }),
            config: InfoConfiguration::Complete,
        };
        let requires = statement_requires(&corpus, &table, statement, &[]);
        let result = prove(statement, &requires, &p, &ports).map_err(|e| format!("run {run}: {e}"))?;
        let counted = calls.load(Ordering::SeqCst);
        ensure!(counted <= p.budget, "run {run}: {counted} evaluations exceed budget {}", p.budget);
        ensure!(
            counted == result.tactic_evaluations_used,
            "run {run}: reported {} evaluations, backend saw {counted}",
            result.tactic_evaluations_used
        );
        proved += result.is_proved() as usize;
        exhausted += matches!(result.outcome, Outcome::BudgetExhausted) as usize;
        max_used = max_used.max(counted);
    }
    Ok(format!(
        "budget 860; {BUDGET_RUNS} randomized runs within budget ({proved} proved, {exhausted} exhausted, max {max_used} evaluations)"
    ))
}

// ---------------------------------------------------------------- clarity

fn clarity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(common::SEED);
    let mut worst = 0.0f64;
    for _ in 0..CLARITY_PAIRS {
        let (y, n) = (rng.random_range(-700.0..0.0), rng.random_range(-700.0..0.0));
        let s = clarity_score(&YesNoLogprobs { log_p_yes: y, log_p_no: n });
        let direct = y.exp() / (y.exp() + n.exp());
        let err = if direct.is_finite() { (s - direct).abs() } else { f64::INFINITY };
        worst = worst.max(err);
        ensure!(err <= CLARITY_TOL, "({y}, {n}): {s} vs oracle {direct}");
        let swapped = clarity_score(&YesNoLogprobs { log_p_yes: n, log_p_no: y });
        ensure!((s + swapped - 1.0).abs() <= CLARITY_TOL, "complementarity fails at ({y}, {n})");
        ensure!((0.0..=1.0).contains(&s), "score {s} out of range");
        let eq = clarity_score(&YesNoLogprobs { log_p_yes: y, log_p_no: y });
        ensure!(eq == 0.5, "equal logprobs give {eq}");
    }
    Ok(format!("{CLARITY_PAIRS} pairs, max error {worst:.2e} (tolerance {CLARITY_TOL:e})"))
}

// ---------------------------------------------------------------- correlation

fn correlation() -> Check {
    let clarity = [0.445, 0.581, 0.712, 0.798, 0.823];
    let success = [21.0, 25.0, 38.0, 42.0, 45.0];
    let r = pearson_r(&clarity, &success).map_err(|e| e.to_string())?;
    // textbook single-pass form as an independent oracle
    let n = clarity.len() as f64;
    let (sx, sy): (f64, f64) = (clarity.iter().sum(), success.iter().sum());
    let sxy: f64 = clarity.iter().zip(&success).map(|(x, y)| x * y).sum();
    let sxx: f64 = clarity.iter().map(|x| x * x).sum();
    let syy: f64 = success.iter().map(|y| y * y).sum();
    let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    ensure!((r - oracle).abs() < 1e-9, "pearson_r {r} vs oracle {oracle}");
    ensure!((r - PEARSON_TARGET).abs() <= PEARSON_TOL, "r = {r:.4}, want {PEARSON_TARGET} ± {PEARSON_TOL}");
    Ok(format!("r = {r:.4} (target {PEARSON_TARGET} ± {PEARSON_TOL})"))
}

// ---------------------------------------------------------------- tokenizer

const MODULES: &[&str] = &["A", "B", "A.Sub"];
const BASES: &[&str] = &["f", "g", "h", "add"];

fn random_names(rng: &mut ChaCha8Rng, n: usize) -> Vec<DisambiguatedName> {
    (0..n)
        .map(|_| {
            let module = MODULES[rng.random_range(0..MODULES.len())];
            let base = BASES[rng.random_range(0..BASES.len())];
            let canonical = format!("{module}.{base}");
            let kernel = match rng.random_range(0..3) {
                0 => canonical.clone(),
                k => format!("{module}.Impl{k}.{base}"),
            };
            DisambiguatedName::new(canonical, kernel)
        })
        .collect()
}

/// Paths naming exactly one entity in `entities`.
fn unambiguous_paths(entities: &BTreeSet<DisambiguatedName>) -> BTreeMap<String, DisambiguatedName> {
    let mut owners: BTreeMap<String, BTreeSet<&DisambiguatedName>> = BTreeMap::new();
    for e in entities {
        owners.entry(e.canonical_path.clone()).or_default().insert(e);
        owners.entry(e.kernel_path.clone()).or_default().insert(e);
    }
    owners.into_iter().filter(|(_, o)| o.len() == 1).map(|(p, o)| (p, (*o.iter().next().unwrap()).clone())).collect()
}

fn tokenizer_case(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut table = TokenTable::new();
    let n = rng.random_range(1..8);
    let first = random_names(rng, n);
    let ids: Vec<TokenId> = first.iter().map(|n| table.intern_name(n.clone())).collect();
    let entities: BTreeSet<DisambiguatedName> = first.iter().cloned().collect();
    let mut checks = 0;

    // same entity, same token; different entities, different tokens
    for (a, ia) in first.iter().zip(&ids) {
        for (b, ib) in first.iter().zip(&ids) {
            ensure!((a == b) == (ia == ib), "{a:?}/{b:?} map to {ia:?}/{ib:?}");
            checks += 1;
        }
    }
    let id_of = |name: &DisambiguatedName| ids[first.iter().position(|n| n == name).unwrap()];
    let plain = ResolutionContext::new();
    for e in &entities {
        let id = id_of(e);
        ensure!(table.resolve_name(&e.render(), &plain) == Some(id), "rendered {} misresolved", e.render());
        let alias = ResolutionContext::new().with_alias("Short", e.render());
        ensure!(table.resolve_name("Short", &alias) == Some(id), "alias of {} misresolved", e.render());
        checks += 2;
    }
    for (path, owner) in unambiguous_paths(&entities) {
        let id = id_of(&owner);
        ensure!(table.resolve_name(&path, &plain) == Some(id), "{path} misresolved");
        let (module, base) = path.rsplit_once('.').unwrap();
        // generated bases never name an entity on their own, so an opened
        // module is the only route
        let opened = ResolutionContext::new().with_open_module(module);
        ensure!(table.resolve_name(base, &opened) == Some(id), "{base} with {module} open misresolved");
        let local = plain.clone().with_local(base, "nat");
        ensure!(table.resolve_name(base, &local).is_none(), "local {base} did not shadow");
        checks += 3;
    }

    // append-only: existing ids never move, new ids come after
    let before: Vec<(TokenId, DisambiguatedName)> =
        table.iter().filter_map(|(id, _)| table.name_of(id).map(|n| (id, n.clone()))).collect();
    let next = table.next_id();
    let n = rng.random_range(1..8);
    let fresh: BTreeSet<DisambiguatedName> = random_names(rng, n).into_iter().collect();
    let added = fresh.iter().filter(|n| !entities.contains(*n)).count();
    let len = table.len();
    for n in &fresh {
        let id = table.intern_name(n.clone());
        ensure!(entities.contains(n) == (id < next), "{n:?} got {id:?} with next {next:?}");
    }
    ensure!(table.len() == len + added, "table grew by {} not {added}", table.len() - len);
    for (id, name) in before {
        ensure!(table.name_of(id) == Some(&name) && table.lookup(&name) == Some(id), "{name:?} moved");
        checks += 1;
    }
    Ok(checks)
}

fn tokenizer() -> Check {
    let mut table = TokenTable::new();
    let id = table.intern_name(DisambiguatedName::new("Coq.ZArith.BinInt.Z.quotrem", "Coq.ZArith.BinIntDef.Z.quotrem"));
    let rendered = table.name_of(id).unwrap().render();
    ensure!(
        rendered.as_bytes() == b"Coq.ZArith.BinInt.Z.quotrem<ker>Coq.ZArith.BinIntDef.Z.quotrem",
        "kernel rendering {rendered:?}"
    );
    ensure!(DisambiguatedName::parse(&rendered) == table.name_of(id).cloned(), "rendered name does not parse back");

    let mut rng = ChaCha8Rng::seed_from_u64(common::SEED);
    let mut checks = 0;
    for case in 0..TOKENIZER_CASES {
        checks += tokenizer_case(&mut rng).map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(format!("<ker> rendering exact; {TOKENIZER_CASES} generated entity sets, {checks} assertions"))
}

// ---------------------------------------------------------------- prompts

/// Expected section presence per configuration. Columns: qualified names,
/// glob defs, origin, internal, intuition, translated, techniques (trace,
/// premises, tactics, notes, hint). State and actions are always present;
/// short names replace qualified ones when absent.
const MATRIX: [(InfoConfiguration, [bool; 7]); 11] = {
    use InfoConfiguration::*;
    [
        (NoContext, [false, false, false, false, false, false, false]),
        (QualifiedName, [true, false, false, false, false, false, false]),
        (EmptyReference, [true, true, false, false, false, false, true]),
        (OriginOnly, [true, true, true, false, false, false, true]),
        (InternalOnly, [true, true, false, true, false, false, true]),
        (IntuitionOnly, [true, true, false, false, true, false, true]),
        (OriginInternal, [true, true, true, true, false, false, true]),
        (OriginIntuition, [true, true, true, false, true, false, true]),
        (InternalIntuition, [true, true, false, true, true, false, true]),
        (Complete, [true, true, true, true, true, false, true]),
        (ChineseTranslation, [true, true, true, true, true, true, true]),
    ]
};

fn expected_sections(row: [bool; 7]) -> BTreeSet<Section> {
    let mut s = BTreeSet::from([Section::ProofState, Section::Actions]);
    s.insert(if row[0] { Section::QualifiedNames } else { Section::ShortNames });
    let single = [Section::GlobDef, Section::Origin, Section::Internal, Section::Intuition, Section::Translated];
    s.extend(single.into_iter().zip(&row[1..6]).filter(|(_, on)| **on).map(|(sec, _)| sec));
    if row[6] {
        s.extend([Section::Trace, Section::Premises, Section::Tactics, Section::Notes, Section::Hint]);
    }
    s
}

/// Section presence read off the rendered text of the fixed fixture.
fn detected_sections(text: &str) -> BTreeSet<Section> {
    let probes = [
        (Section::ProofState, text.contains("=== Current Proof States ===")),
        (Section::ShortNames, text.contains("# Goal:\n0 + n = n\n")),
        (Section::QualifiedNames, text.contains("# Goal:\nCoq.Init.Logic.eq nat (Coq.Init.Nat.add 0 n) n\n")),
        (Section::GlobDef, text.contains(markers::GLOB_DEF)),
        (Section::Origin, text.contains("\nOrigin:\n")),
        (Section::Internal, text.contains("\nInternal:\n")),
        (Section::Intuition, text.contains("\nIntuition:\n")),
        (Section::Translated, text.contains("对第一个参数递归定义的加法")),
        (Section::Trace, text.contains(markers::TRACING)),
        (Section::Premises, text.contains("=== Related Premises ===")),
        (Section::Tactics, text.contains("=== Related Tactic ===")),
        (Section::Notes, text.contains("=== Public Notes ===")),
        (Section::Hint, text.contains("=== Hint ===")),
        (Section::Actions, text.contains(markers::PROVE)),
    ];
    probes.into_iter().filter(|(_, on)| *on).map(|(s, _)| s).collect()
}

fn prompts() -> Check {
    let dir = common::fixtures().join("golden");
    ensure!(MATRIX.map(|(c, _)| c) == InfoConfiguration::ALL, "matrix rows out of order");
    let mut cells = 0;
    for (config, row) in MATRIX {
        let bundle = common::golden_bundle(config);
        let path = dir.join(format!("{}.txt", config.slug()));
        let golden = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure!(golden == bundle.rendered.as_bytes(), "{config}: rendered prompt differs from {}", path.display());
        let want = expected_sections(row);
        ensure!(bundle.sections_present == want, "{config}: sections {:?}, want {want:?}", bundle.sections_present);
        ensure!(config.inclusion().sections() == want, "{config}: inclusion disagrees");
        let seen = detected_sections(&bundle.rendered);
        ensure!(seen == want, "{config}: text shows {seen:?}, want {want:?}");
        cells += 14;
    }
    Ok(format!("11 golden files identical; {cells} matrix cells verified"))
}

// ---------------------------------------------------------------- suite

fn outcome_name(o: &Outcome) -> &'static str {
    match o {
        Outcome::Proved(_) => "proved",
        Outcome::Failure => "failure",
        Outcome::BudgetExhausted => "budget_exhausted",
    }
}

fn suite() -> Check {
    let params = SearchParams::default();
    let (_, corpus) = common::corpus();
    let mut proved = 0;
    for (name, statement, expected) in common::suite() {
        let run = common::run_suite_theorem(&name, &statement, &params);
        let r = &run.result;
        let trace: Vec<String> = r.trace().unwrap_or_default().iter().map(|t| t.tactic.clone()).collect();
        ensure!(outcome_name(&r.outcome) == expected.outcome, "{name}: {:?}, want {}", r.outcome, expected.outcome);
        ensure!(trace == expected.trace, "{name}: trace {trace:?}, want {:?}", expected.trace);
        ensure!(
            r.tactic_evaluations_used == expected.evaluations,
            "{name}: {} evaluations, want {}",
            r.tactic_evaluations_used,
            expected.evaluations
        );
        ensure!(r.depth_reached == expected.depth, "{name}: depth {}, want {}", r.depth_reached, expected.depth);
        if r.is_proved() {
            // a fresh backend, so nothing from the search session leaks in
            let fresh = SyntheticBackend::from_corpus(&corpus);
            for backend in [&run.backend, &fresh] {
                let session =
                    replay(backend, &statement, &run.requires, &trace).map_err(|e| format!("{name}: replay: {e}"))?;
                ensure!(is_goal_complete(session.current_state()), "{name}: replayed trace leaves goals open");
            }
            proved += 1;
        }
    }
    Ok(format!("25/25 theorems match ({proved} proved, traces replay to completion)"))
}

// ---------------------------------------------------------------- determinism

fn bench_once(out: &Path, jobs: &str) -> Result<(), String> {
    let fx = common::fixtures();
    let f = |rel: &str| fx.join(rel).display().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_prooforge"))
        .args(["--seed", "7", "bench", &f("suite/theorems.txt"), "--entities", &f("entities.jsonl")])
        .args(["--proofs", &f("proofs.jsonl"), "--script-dir", &f("suite/scripts"), "--jobs", jobs])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "bench exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    Ok(())
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("a", "4"), ("b", "4"), ("c", "1")];
    for (dir, jobs) in runs {
        bench_once(&tmp.path().join(dir), jobs)?;
    }
    let a = tree(&tmp.path().join("a"));
    ensure!(a.len() == 27, "expected 25 logs, runs.jsonl and manifest.json, found {}", a.len());
    for (dir, _) in &runs[1..] {
        let other = tree(&tmp.path().join(dir));
        ensure!(a.keys().eq(other.keys()), "run {dir} wrote different files");
        for (file, bytes) in &a {
            ensure!(other[file] == *bytes, "{file} differs in run {dir}");
        }
    }
    Ok(format!("{} output files byte-identical across three runs (jobs 4, 4, 1)", a.len()))
}

// ---------------------------------------------------------------- corpus

fn round_trip() -> Check {
    let fx = common::fixtures();
    let mut t1 = TokenTable::new();
    let c1 = load_entity_corpus(fx.join("entities.jsonl"), &mut t1).map_err(|e| e.to_string())?;
    let mut w1 = Vec::new();
    write_entity_corpus(&c1, &t1, &mut w1).map_err(|e| e.to_string())?;
    let mut t2 = TokenTable::new();
    let c2 = parse_entity_corpus(&w1[..], &mut t2).map_err(|e| e.to_string())?;
    let mut w2 = Vec::new();
    write_entity_corpus(&c2, &t2, &mut w2).map_err(|e| e.to_string())?;
    ensure!(w1 == w2, "entity corpus is not a fixpoint after one round trip");
    // token ids depend on load order, so dependencies compare by name
    let recs = |c: &prooforge::corpus::EntityCorpus, t: &TokenTable| {
        let mut v: Vec<String> = c
            .iter()
            .map(|(_, r)| {
                let mut r = r.clone();
                let deps: Vec<String> = r.dependencies.iter().map(|d| t.name_of(*d).unwrap().render()).collect();
                r.dependencies.clear();
                format!("{} {deps:?}", serde_json::to_string(&r).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let (r1, r2) = (recs(&c1, &t1), recs(&c2, &t2));
    let diff: Vec<_> = r1.iter().zip(&r2).filter(|(a, b)| a != b).take(2).collect();
    ensure!(r1 == r2, "entity records changed across the round trip: {diff:?}");

    let p1 = load_proof_corpus(fx.join("proofs.jsonl")).map_err(|e| e.to_string())?;
    let mut w1 = Vec::new();
    write_proof_corpus(&p1, &mut w1).map_err(|e| e.to_string())?;
    let p2 = parse_proof_corpus(&w1[..]).map_err(|e| e.to_string())?;
    let mut w2 = Vec::new();
    write_proof_corpus(&p2, &mut w2).map_err(|e| e.to_string())?;
    ensure!(w1 == w2 && p1.len() == p2.len(), "proof corpus is not a fixpoint");

    let worked = p2.get("Demo.Arith.add_0_l").ok_or("worked proof missing")?;
    let tactics: Vec<&str> = worked.steps.iter().map(|s| s.tactic.as_str()).collect();
    ensure!(tactics == ["intros n", "simpl", "reflexivity"], "worked proof tactics {tactics:?}");
    let goals: Vec<&str> = worked.steps.iter().map(|s| s.before.goals[0].goal_surface.as_str()).collect();
    ensure!(goals == ["forall n:nat, 0 + n = n", "0 + n = n", "n = n"], "worked proof goals {goals:?}");
    ensure!(worked.steps[2].after.goals.is_empty() && worked.complete, "worked proof does not end completed");
    let violations = validate_proof_chain(worked);
    ensure!(violations.is_empty(), "worked proof has chain violations: {violations:?}");
    let all: usize = ["Demo.Arith.add_0_l", "Demo.Arith.add_0_r", "Demo.Logic.both"]
        .iter()
        .filter_map(|n| p2.get(n))
        .map(|p| validate_proof_chain(p).len())
        .sum();
    ensure!(all == 0, "{all} chain violations across the proof corpus");
    Ok(format!("{} entities and {} proofs stable; worked proof has 0 chain violations", c1.len(), p1.len()))
}
