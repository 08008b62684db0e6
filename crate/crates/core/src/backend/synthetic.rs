//! Deterministic in-process prover over the [`term`](super::term) fragment.
//!
//! Globals come from an entity corpus: theorem-like records whose origin
//! parses as `Lemma name : statement.` become usable lemmas, everything else
//! is an opaque constant. `Coq.Init.*` is always loaded; other modules need a
//! `Require Import <module>.` line.
//!
//! Rule table (each rule acts on the first goal):
//!
//! | tactic                  | effect                                                        |
//! |-------------------------|---------------------------------------------------------------|
//! | `intros [x..]`          | introduce products; unnamed arrows become `H`, `H0`, ...      |
//! | `intro [x]`             | introduce one product                                         |
//! | `simpl`                 | `0 + m = m`, `S p + m = S (p + m)`, `0 * m = 0`, `S p * m = m + p * m`, numeral folding; fails without progress |
//! | `reflexivity`           | closes `a = a` (syntactic, no reduction)                      |
//! | `split`                 | `A /\ B` into two goals; closes `True`                        |
//! | `left` / `right`        | pick a side of `A \/ B`                                       |
//! | `assumption`            | closes a goal equal to a hypothesis                           |
//! | `exact h`               | closes with a hypothesis, `I`, or a lemma instance            |
//! | `apply h`               | match the conclusion, premises become goals                   |
//! | `rewrite [<-] h`        | rewrite every instance of the first match; closes `a = a`     |
//! | `induction x`           | `P 0` and `x, IHx : P x |- P (S x)`                           |
//! | `destruct x`            | `P 0` and `P (S x)`                                           |
//! | `trivial` / `auto`      | closes `True`, `a = a`, or an assumption                      |
//! | `idtac`                 | no change                                                     |
//!
//! Compound tactics (`;`, `try`, ...) are rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use regex::Regex;

use super::term::{bin, fresh_name, match_term, parse_term, print_internal, print_surface, succ, var, Op, Term};
use super::{desync, BackendError, CompileResult, ProverBackend, ProverSession};
use crate::corpus::{module_of, EntityCorpus};
use crate::model::{normalize_ws, GoalState, ProofState};

const ALWAYS_LOADED: &str = "Coq.Init";

const BUILTINS: [(&str, &str); 10] = [
    ("nat", "nat"),
    ("Prop", "Prop"),
    ("Set", "Set"),
    ("Type", "Type"),
    ("bool", "bool"),
    ("S", "S"),
    ("True", "Coq.Init.Logic.True"),
    ("False", "Coq.Init.Logic.False"),
    ("I", "Coq.Init.Logic.I"),
    ("eq_refl", "Coq.Init.Logic.eq_refl"),
];

fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, q)| *n == name || *q == name).map(|(_, q)| *q)
}

#[derive(Debug, Clone)]
struct Global {
    module: Option<String>,
    statement: Option<Term>,
}

#[derive(Debug, Clone, Default)]
struct Env {
    globals: HashMap<String, Global>,
    /// Path suffix to canonical name; `None` when ambiguous.
    aliases: HashMap<String, Option<String>>,
}

impl Env {
    fn add(&mut self, canonical: &str, global: Global) {
        let segments: Vec<&str> = canonical.split('.').collect();
        for start in 1..segments.len() {
            let suffix = segments[start..].join(".");
            self.aliases
                .entry(suffix)
                .and_modify(|slot| {
                    if slot.as_deref() != Some(canonical) {
                        *slot = None;
                    }
                })
                .or_insert_with(|| Some(canonical.to_string()));
        }
        self.globals.insert(canonical.to_string(), global);
    }

    /// Canonical name of `name`, ignoring module visibility.
    fn canonical(&self, name: &str) -> Option<String> {
        if let Some(b) = builtin(name) {
            return Some(b.to_string());
        }
        if self.globals.contains_key(name) {
            return Some(name.to_string());
        }
        self.aliases.get(name).cloned().flatten()
    }

    fn visible(&self, canonical: &str, loaded: &BTreeSet<String>) -> bool {
        if builtin(canonical).is_some() {
            return true;
        }
        match self.globals.get(canonical).and_then(|g| g.module.as_deref()) {
            None => true,
            Some(m) => m == ALWAYS_LOADED || m.starts_with("Coq.Init.") || loaded.contains(m),
        }
    }

    /// Rename free globals of `t` to canonical names; unknown names are
    /// reported unless `lenient`.
    fn canonicalize(&self, t: &Term, loaded: Option<&BTreeSet<String>>) -> Result<Term, String> {
        let mut map = BTreeMap::new();
        for name in t.free_vars() {
            let resolved = self.canonical(&name).filter(|c| loaded.is_none_or(|l| self.visible(c, l)));
            match resolved {
                Some(c) if builtin(&c).is_some() => {}
                Some(c) => {
                    map.insert(name, Term::Var(c));
                }
                None if loaded.is_some() => {
                    return Err(format!("The reference {name} was not found in the current environment."))
                }
                None => {}
            }
        }
        Ok(t.subst_all(&map))
    }
}

/// `(name, statement)` of `Theorem name : stmt.` or of a bare statement.
pub fn split_theorem(source: &str) -> (Option<String>, String) {
    static KEYWORDS: &str = r"(?s)^\s*(?:Theorem|Lemma|Example|Fact|Remark|Corollary|Proposition|Axiom|Conjecture)\s+([A-Za-z_][\w'.]*)\s*:\s*(.*)$";
    let re = Regex::new(KEYWORDS).expect("static regex");
    let (name, rest) = match re.captures(source) {
        Some(c) => (Some(c[1].to_string()), c[2].to_string()),
        None => (None, source.trim().strip_prefix("Goal ").unwrap_or(source.trim()).to_string()),
    };
    let body = match rest.find("Proof") {
        Some(i) if rest[..i].trim_end().ends_with('.') => &rest[..i],
        _ => rest.as_str(),
    };
    (name, body.trim().trim_end_matches('.').trim().to_string())
}

/// Module named by a `Require` line.
pub fn parse_require(line: &str) -> Option<String> {
    let re = Regex::new(r"^\s*(?:From\s+([\w.]+)\s+)?Require(?:\s+(?:Import|Export))?\s+([\w.]+?)\.?\s*$")
        .expect("static regex");
    let c = re.captures(line)?;
    Some(match c.get(1) {
        Some(from) => format!("{}.{}", from.as_str(), &c[2]),
        None => c[2].to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Goal {
    hyps: Vec<(String, Term)>,
    concl: Term,
}

impl Goal {
    fn names(&self) -> BTreeSet<String> {
        let mut s: BTreeSet<String> = self.hyps.iter().map(|(n, _)| n.clone()).collect();
        s.extend(self.concl.free_vars());
        s
    }

    fn hyp(&self, name: &str) -> Option<&Term> {
        self.hyps.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn simpl(t: &Term) -> Term {
    match t {
        Term::Bin(Op::Add, a, b) => add(simpl(a), simpl(b)),
        Term::Bin(Op::Mul, a, b) => mul(simpl(a), simpl(b)),
        Term::Bin(op, a, b) => bin(*op, simpl(a), simpl(b)),
        Term::App(f, args) if f == "S" && args.len() == 1 => succ(simpl(&args[0])),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(simpl).collect()),
        Term::Forall(x, ty, body) => Term::Forall(x.clone(), Box::new(simpl(ty)), Box::new(simpl(body))),
        other => other.clone(),
    }
}

fn add(a: Term, b: Term) -> Term {
    match (a, b) {
        (Term::Num(0), b) => b,
        (Term::Num(x), Term::Num(y)) => Term::Num(x + y),
        (Term::Num(k), b) => succ(add(Term::Num(k - 1), b)),
        (Term::App(f, mut args), b) if f == "S" && args.len() == 1 => succ(add(args.pop().expect("one arg"), b)),
        (a, b) => bin(Op::Add, a, b),
    }
}

fn mul(a: Term, b: Term) -> Term {
    match (a, b) {
        (Term::Num(0), _) => Term::Num(0),
        (Term::Num(x), Term::Num(y)) => Term::Num(x * y),
        (Term::Num(k), b) => add(b.clone(), mul(Term::Num(k - 1), b)),
        (Term::App(f, mut args), b) if f == "S" && args.len() == 1 => {
            add(b.clone(), mul(args.pop().expect("one arg"), b))
        }
        (a, b) => bin(Op::Mul, a, b),
    }
}

fn is_refl(t: &Term) -> bool {
    matches!(t, Term::Bin(Op::Eq, a, b) if a.alpha_eq(b))
}

fn is_true(t: &Term) -> bool {
    matches!(t, Term::Var(x) if builtin(x) == Some("Coq.Init.Logic.True"))
}

fn is_nat(t: &Term) -> bool {
    matches!(t, Term::Var(x) if x == "nat")
}

/// Strip leading binders and premises: (metas, premises, conclusion), with
/// metas renamed to `?x` so they cannot clash with goal names.
fn decompose(statement: &Term) -> (Vec<String>, Vec<Term>, Term) {
    let mut metas = Vec::new();
    let mut premises = Vec::new();
    let mut t = statement.clone();
    loop {
        match t {
            Term::Forall(x, _, body) => {
                let meta = format!("?{x}");
                t = body.subst(&x, &Term::Var(meta.clone()));
                metas.push(meta);
            }
            Term::Bin(Op::Imp, a, b) => {
                premises.push(*a);
                t = *b;
            }
            other => return (metas, premises, other),
        }
    }
}

fn unbound(metas: &[String], subst: &BTreeMap<String, Term>, terms: &[&Term]) -> Option<String> {
    metas
        .iter()
        .find(|m| !subst.contains_key(*m) && terms.iter().any(|t| t.mentions(m)))
        .map(|m| m.trim_start_matches('?').to_string())
}

/// Subterms not under a binder that they mention, in pre-order.
fn rewritable_subterms(t: &Term) -> Vec<Term> {
    fn walk(t: &Term, bound: &mut Vec<String>, out: &mut Vec<Term>) {
        if !bound.iter().any(|b| t.mentions(b)) {
            out.push(t.clone());
        }
        match t {
            Term::App(_, args) => args.iter().for_each(|a| walk(a, bound, out)),
            Term::Bin(_, a, b) => {
                walk(a, bound, out);
                walk(b, bound, out);
            }
            Term::Forall(x, ty, body) => {
                walk(ty, bound, out);
                bound.push(x.clone());
                walk(body, bound, out);
                bound.pop();
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(t, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug)]
pub struct SyntheticBackend {
    env: Arc<Env>,
    sessions: AtomicU64,
}

impl Default for SyntheticBackend {
    fn default() -> Self {
        SyntheticBackend { env: Arc::new(Env::default()), sessions: AtomicU64::new(0) }
    }
}

impl SyntheticBackend {
    /// Backend with no globals beyond the built-in ones.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_corpus(corpus: &EntityCorpus) -> Self {
        let mut env = Env::default();
        for (_, record) in corpus.iter() {
            env.add(&record.name, Global { module: module_of(record), statement: None });
        }
        let mut statements = Vec::new();
        for (_, record) in corpus.iter() {
            if !record.kind.is_provable() {
                continue;
            }
            let (_, stmt) = split_theorem(&record.origin);
            match parse_term(&stmt).map_err(|e| e.0).and_then(|t| env.canonicalize(&t, None)) {
                Ok(t) => statements.push((record.name.clone(), t)),
                Err(e) => log::debug!("{}: statement not usable by the synthetic backend: {e}", record.name),
            }
        }
        for (name, t) in statements {
            if let Some(g) = env.globals.get_mut(&name) {
                g.statement = Some(t);
            }
        }
        SyntheticBackend { env: Arc::new(env), sessions: AtomicU64::new(0) }
    }

    /// Add a lemma usable by `apply`, `rewrite` and `exact`. `module` is the
    /// module a `Require Import` must load before the name is visible.
    pub fn with_lemma(mut self, name: &str, module: Option<&str>, statement: &str) -> Result<Self, String> {
        let env = Arc::make_mut(&mut self.env);
        env.add(name, Global { module: module.map(str::to_string), statement: None });
        let term = parse_term(statement).map_err(|e| e.0)?;
        let term = env.canonicalize(&term, None)?;
        env.globals.get_mut(name).expect("just added").statement = Some(term);
        Ok(self)
    }

    fn start(&self, theorem_source: &str, requires: &[String]) -> Result<SyntheticSession, String> {
        let mut loaded = BTreeSet::new();
        for line in requires {
            match parse_require(line) {
                Some(m) => {
                    loaded.insert(m);
                }
                None => return Err(format!("Syntax error: not a Require command: {line}")),
            }
        }
        let (_, statement) = split_theorem(theorem_source);
        if statement.is_empty() {
            return Err("Syntax error: empty theorem statement.".into());
        }
        let term = parse_term(&statement).map_err(|e| e.0)?;
        let concl = self.env.canonicalize(&term, Some(&loaded))?;
        let id = self.sessions.fetch_add(1, Ordering::Relaxed);
        let mut session = SyntheticSession {
            id: format!("synthetic-{id}"),
            theorem: theorem_source.to_string(),
            env: self.env.clone(),
            loaded: Arc::new(loaded),
            goals: vec![Goal { hyps: Vec::new(), concl }],
            state: ProofState::completed(),
            transcript: Vec::new(),
        };
        session.state = session.render(&session.goals);
        // initial surface goal is the statement as written
        session.state.goals[0].goal_surface = normalize_ws(&statement);
        Ok(session)
    }
}

impl ProverBackend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn compile_theorem(&self, theorem_source: &str, requires: &[String]) -> CompileResult {
        match self.start(theorem_source, requires) {
            Ok(s) => CompileResult::ok(s.state),
            Err(e) => CompileResult::err(e),
        }
    }

    fn open_session(&self, theorem_source: &str, requires: &[String]) -> Result<Box<dyn ProverSession>, BackendError> {
        self.start(theorem_source, requires)
            .map(|s| Box::new(s) as Box<dyn ProverSession>)
            .map_err(BackendError::Theorem)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSession {
    id: String,
    theorem: String,
    env: Arc<Env>,
    loaded: Arc<BTreeSet<String>>,
    goals: Vec<Goal>,
    state: ProofState,
    transcript: Vec<String>,
}

fn qualify(name: &str) -> String {
    builtin(name).map(str::to_string).unwrap_or_else(|| name.to_string())
}

impl SyntheticSession {
    fn render(&self, goals: &[Goal]) -> ProofState {
        let goals = goals
            .iter()
            .map(|g| {
                let mut gs = GoalState::new(print_surface(&g.concl), "");
                let mut scope = BTreeMap::new();
                for (name, ty) in &g.hyps {
                    gs = gs.with_hypothesis(name, print_surface(ty), print_internal(ty, &qualify, &scope));
                    scope.insert(name.clone(), ty.clone());
                }
                gs.goal_internal = print_internal(&g.concl, &qualify, &scope);
                gs
            })
            .collect();
        ProofState::new(goals)
    }

    /// Statement of a hypothesis or visible lemma.
    fn statement_of(&self, goal: &Goal, name: &str) -> Result<Term, String> {
        if let Some(t) = goal.hyp(name) {
            return Ok(t.clone());
        }
        let canonical = self
            .env
            .canonical(name)
            .filter(|c| self.env.visible(c, &self.loaded))
            .ok_or_else(|| format!("The reference {name} was not found in the current environment."))?;
        self.env
            .globals
            .get(&canonical)
            .and_then(|g| g.statement.clone())
            .ok_or_else(|| format!("{name} has no statement usable as a lemma."))
    }

    fn run(&self, tactic: &str) -> Result<Vec<Goal>, String> {
        let text = tactic.trim().trim_end_matches('.').trim();
        if text.is_empty() {
            return Err("empty tactic".into());
        }
        if text.contains(';') || text.contains("||") || text.contains('[') {
            return Err("Compound tactics are not supported; submit one atomic tactic.".into());
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        let (name, args) = (words[0], &words[1..]);
        if name == "idtac" && args.is_empty() {
            return Ok(self.goals.clone());
        }
        let Some(goal) = self.goals.first() else {
            return Err("No such goal.".into());
        };
        let new = match (name, args) {
            ("intros", names) => self.intros(goal, names, true)?,
            ("intro", []) => self.intros(goal, &[], false)?,
            ("intro", [x]) => self.intros(goal, &[x], false)?,
            ("simpl", []) => {
                let concl = simpl(&goal.concl);
                if concl == goal.concl {
                    return Err("Failed to progress.".into());
                }
                vec![Goal { hyps: goal.hyps.clone(), concl }]
            }
            ("reflexivity", []) => match &goal.concl {
                Term::Bin(Op::Eq, a, b) if a.alpha_eq(b) => vec![],
                Term::Bin(Op::Eq, a, b) => {
                    return Err(format!("Unable to unify \"{}\" with \"{}\".", print_surface(b), print_surface(a)))
                }
                _ => return Err("The reflexivity tactic applies only to equalities.".into()),
            },
            ("split", []) => match &goal.concl {
                Term::Bin(Op::And, a, b) => vec![
                    Goal { hyps: goal.hyps.clone(), concl: (**a).clone() },
                    Goal { hyps: goal.hyps.clone(), concl: (**b).clone() },
                ],
                t if is_true(t) => vec![],
                _ => return Err("Not an inductive goal with 1 constructor.".into()),
            },
            ("left" | "right", []) => match &goal.concl {
                Term::Bin(Op::Or, a, b) => {
                    let side = if name == "left" { a } else { b };
                    vec![Goal { hyps: goal.hyps.clone(), concl: (**side).clone() }]
                }
                _ => return Err("Not an inductive goal with 2 constructors.".into()),
            },
            ("assumption", []) => {
                if goal.hyps.iter().any(|(_, t)| t.alpha_eq(&goal.concl)) {
                    vec![]
                } else {
                    return Err("No such assumption.".into());
                }
            }
            ("trivial" | "auto", []) => {
                if is_true(&goal.concl)
                    || is_refl(&goal.concl)
                    || goal.hyps.iter().any(|(_, t)| t.alpha_eq(&goal.concl))
                {
                    vec![]
                } else {
                    return Err(format!("{name} failed to solve the goal."));
                }
            }
            ("exact", [x]) => {
                if *x == "I" && is_true(&goal.concl) {
                    vec![]
                } else {
                    let goals = self.apply(goal, x)?;
                    if !goals.is_empty() {
                        return Err(format!(
                            "The term \"{x}\" does not have the expected type \"{}\".",
                            print_surface(&goal.concl)
                        ));
                    }
                    goals
                }
            }
            ("apply", [x]) => self.apply(goal, x)?,
            ("rewrite", [x]) => self.rewrite(goal, x, false)?,
            ("rewrite", ["<-", x]) => self.rewrite(goal, x, true)?,
            ("induction", [x]) => self.cases(goal, x, true)?,
            ("destruct", [x]) => self.cases(goal, x, false)?,
            _ => return Err(format!("Syntax error: unknown or malformed tactic \"{text}\".")),
        };
        let mut goals = new;
        goals.extend(self.goals[1..].iter().cloned());
        Ok(goals)
    }

    fn intros(&self, goal: &Goal, names: &[&str], all: bool) -> Result<Vec<Goal>, String> {
        let mut g = goal.clone();
        let limit = if names.is_empty() {
            if all {
                usize::MAX
            } else {
                1
            }
        } else {
            names.len()
        };
        let mut done = 0;
        while done < limit {
            let wanted = names.get(done).copied();
            if let Some(w) = wanted {
                if g.hyp(w).is_some() {
                    return Err(format!("{w} is already used."));
                }
            }
            match g.concl.clone() {
                Term::Forall(x, ty, body) => {
                    let avoid: BTreeSet<String> = g.hyps.iter().map(|(n, _)| n.clone()).collect();
                    let name = wanted.map(str::to_string).unwrap_or_else(|| fresh_name(&x, &avoid));
                    g.concl = body.subst(&x, &Term::Var(name.clone()));
                    g.hyps.push((name, *ty));
                }
                Term::Bin(Op::Imp, a, b) => {
                    let name = wanted.map(str::to_string).unwrap_or_else(|| fresh_name("H", &g.names()));
                    g.hyps.push((name, *a));
                    g.concl = *b;
                }
                _ if !names.is_empty() || done == 0 => return Err("No product even after head-reduction.".into()),
                _ => break,
            }
            done += 1;
        }
        Ok(vec![g])
    }

    fn apply(&self, goal: &Goal, name: &str) -> Result<Vec<Goal>, String> {
        let statement = self.statement_of(goal, name)?;
        let (metas, premises, concl) = decompose(&statement);
        let meta_set: BTreeSet<String> = metas.iter().cloned().collect();
        // try the full conclusion first, then fold premises back in
        for keep in (0..=premises.len()).rev() {
            let target = premises[keep..].iter().rev().fold(concl.clone(), |acc, p| bin(Op::Imp, p.clone(), acc));
            let mut subst = BTreeMap::new();
            if !match_term(&target, &goal.concl, &meta_set, &mut subst) {
                continue;
            }
            let used: Vec<&Term> = premises[..keep].iter().collect();
            if let Some(m) = unbound(&metas, &subst, &used) {
                return Err(format!("Unable to find an instance for the variable {m}."));
            }
            return Ok(premises[..keep]
                .iter()
                .map(|p| Goal { hyps: goal.hyps.clone(), concl: p.subst_all(&subst) })
                .collect());
        }
        Err(format!(
            "Unable to unify \"{}\" with \"{}\".",
            print_surface(&strip_metas(&concl)),
            print_surface(&goal.concl)
        ))
    }

    fn rewrite(&self, goal: &Goal, name: &str, backwards: bool) -> Result<Vec<Goal>, String> {
        let statement = self.statement_of(goal, name)?;
        let (metas, premises, concl) = decompose(&statement);
        let Term::Bin(Op::Eq, l, r) = concl else {
            return Err("The term provided does not end with an equation.".into());
        };
        let (from, to) = if backwards { (*r, *l) } else { (*l, *r) };
        let meta_set: BTreeSet<String> = metas.iter().cloned().collect();
        for sub in rewritable_subterms(&goal.concl) {
            let mut subst = BTreeMap::new();
            if !match_term(&from, &sub, &meta_set, &mut subst) {
                continue;
            }
            let mut needed: Vec<&Term> = premises.iter().collect();
            needed.push(&to);
            if let Some(m) = unbound(&metas, &subst, &needed) {
                return Err(format!("Unable to find an instance for the variable {m}."));
            }
            let inst_from = from.subst_all(&subst);
            let inst_to = to.subst_all(&subst);
            let concl = goal.concl.replace(&inst_from, &inst_to);
            let mut out = Vec::new();
            if !is_refl(&concl) {
                out.push(Goal { hyps: goal.hyps.clone(), concl });
            }
            out.extend(premises.iter().map(|p| Goal { hyps: goal.hyps.clone(), concl: p.subst_all(&subst) }));
            return Ok(out);
        }
        Err(format!("Found no subterm matching \"{}\" in the current goal.", print_surface(&strip_metas(&from))))
    }

    fn cases(&self, goal: &Goal, x: &str, with_ih: bool) -> Result<Vec<Goal>, String> {
        let mut g = goal.clone();
        if g.hyp(x).is_none() {
            // introduce up to a universally quantified x
            let mut found = false;
            let mut probe = g.concl.clone();
            while let Term::Forall(y, _, body) = probe {
                if y == x {
                    found = true;
                    break;
                }
                probe = *body;
            }
            if !found {
                return Err(format!("The variable {x} was not found in the current environment."));
            }
            while g.hyp(x).is_none() {
                g = self.intros(&g, &[], false)?.remove(0);
            }
        }
        let ty = g.hyp(x).cloned().expect("introduced");
        if !is_nat(&ty) {
            return Err(format!("Case analysis on {} is not supported by this backend.", print_surface(&ty)));
        }
        // revert hypotheses that mention x
        let mut kept = Vec::new();
        let mut reverted = Vec::new();
        for (n, t) in g.hyps.into_iter() {
            if n == x {
                continue;
            }
            if t.mentions(x) {
                reverted.push(t);
            } else {
                kept.push((n, t));
            }
        }
        let motive = reverted.into_iter().rev().fold(g.concl, |acc, h| bin(Op::Imp, h, acc));
        let base = Goal { hyps: kept.clone(), concl: simpl_numerals(&motive.subst(x, &Term::Num(0))) };
        let mut step_hyps = kept;
        step_hyps.push((x.to_string(), var("nat")));
        if with_ih {
            let avoid: BTreeSet<String> = step_hyps.iter().map(|(n, _)| n.clone()).collect();
            step_hyps.push((fresh_name(&format!("IH{x}"), &avoid), motive.clone()));
        }
        let step = Goal { hyps: step_hyps, concl: motive.subst(x, &succ(var(x))) };
        Ok(vec![base, step])
    }
}

/// Fold `S` over numerals only, leaving arithmetic alone.
fn simpl_numerals(t: &Term) -> Term {
    match t {
        Term::App(f, args) if f == "S" && args.len() == 1 => succ(simpl_numerals(&args[0])),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(simpl_numerals).collect()),
        Term::Bin(op, a, b) => bin(*op, simpl_numerals(a), simpl_numerals(b)),
        Term::Forall(x, ty, body) => Term::Forall(x.clone(), ty.clone(), Box::new(simpl_numerals(body))),
        other => other.clone(),
    }
}

fn strip_metas(t: &Term) -> Term {
    let map: BTreeMap<String, Term> = t
        .free_vars()
        .into_iter()
        .filter(|v| v.starts_with('?'))
        .map(|v| (v.clone(), Term::Var(v.trim_start_matches('?').to_string())))
        .collect();
    t.subst_all(&map)
}

impl ProverSession for SyntheticSession {
    fn id(&self) -> &str {
        &self.id
    }

    fn theorem(&self) -> &str {
        &self.theorem
    }

    fn current_state(&self) -> &ProofState {
        &self.state
    }

    fn transcript(&self) -> &[String] {
        &self.transcript
    }

    fn compile_tactic(&mut self, tactic: &str, state: &ProofState) -> Result<CompileResult, BackendError> {
        if !state.equivalent(&self.state) {
            return Err(desync(state, &self.state));
        }
        Ok(match self.run(tactic) {
            Ok(goals) => CompileResult::ok(self.render(&goals)),
            Err(e) => CompileResult::err(e),
        })
    }

    fn apply_tactic(&mut self, tactic: &str) -> Result<ProofState, BackendError> {
        let goals = self.run(tactic).map_err(BackendError::Tactic)?;
        self.state = self.render(&goals);
        self.goals = goals;
        self.transcript.push(tactic.trim().to_string());
        Ok(self.state.clone())
    }

    fn fork(&self) -> Result<Box<dyn ProverSession>, BackendError> {
        Ok(Box::new(self.clone()))
    }
}
