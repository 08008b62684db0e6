//! Interchange format for extracted entities and linearized proofs.
//!
//! Both files are line-delimited JSON behind a mandatory header line:
//!
//! ```text
//! #prooforge-corpus v1 entities
//! {"name": "Coq.Init.Nat.add", "kernel_name": "Coq.Init.Nat.add", "kind": "Fixpoint", ...}
//! ```
//!
//! In entity files `dependencies` lists *names* (a rendered `canonical<ker>kernel`
//! key, a canonical or kernel path, or any unambiguous path suffix); they are
//! resolved to token ids once every record of the file is interned. Fields not
//! known to this version are carried through untouched.
//!
//! Inductive records whose internal text lists constructors
//! (`T : Prop | Path.T.C : Path.T`) get one synthesized `Constructor` record per
//! constructor unless the file already supplies it. Synthesized records are
//! never written back.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::Value;

use crate::model::{validate_proof_chain, EntityKind, EntityRecord, InteractiveProof, ProofState};
use crate::tokenizer::{DisambiguatedName, ResolutionContext, TokenClass, TokenId, TokenTable};

pub const ENTITY_HEADER: &str = "#prooforge-corpus v1 entities";
pub const PROOF_HEADER: &str = "#prooforge-corpus v1 proofs";

/// Default unfolding depth for concept extraction.
pub const DEFAULT_CONCEPT_DEPTH: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("token {0} has no record in the corpus")]
    UnknownToken(TokenId),
}

impl CorpusError {
    fn format(line: usize, message: impl Into<String>) -> Self {
        CorpusError::Format { line, message: message.into() }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Format { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EntityCorpus {
    pub records: Vec<EntityRecord>,
    tokens: Vec<TokenId>,
    by_token: HashMap<TokenId, usize>,
    source_index: BTreeMap<String, Vec<usize>>,
    /// Source line of each record; `None` for synthesized constructors.
    lines: Vec<Option<usize>>,
    context: ResolutionContext,
    dangling_dependencies: usize,
}

impl EntityCorpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn token_of(&self, index: usize) -> TokenId {
        self.tokens[index]
    }

    pub fn record(&self, token: TokenId) -> Option<&EntityRecord> {
        self.by_token.get(&token).map(|&i| &self.records[i])
    }

    pub fn records_in(&self, source_file: &str) -> impl Iterator<Item = &EntityRecord> {
        self.source_index.get(source_file).into_iter().flatten().map(|&i| &self.records[i])
    }

    pub fn source_files(&self) -> impl Iterator<Item = &str> {
        self.source_index.keys().map(String::as_str)
    }

    pub fn is_synthesized(&self, index: usize) -> bool {
        self.lines[index].is_none()
    }

    /// Alias table of every unambiguous path suffix in the corpus.
    pub fn resolution_context(&self) -> &ResolutionContext {
        &self.context
    }

    /// Dependency names that did not resolve at load time.
    pub fn dangling_dependencies(&self) -> usize {
        self.dangling_dependencies
    }

    /// Resolve a user-facing name against this corpus.
    pub fn find(&self, table: &TokenTable, name: &str) -> Option<(TokenId, &EntityRecord)> {
        let id = table.resolve_name(name, &self.context)?;
        self.record(id).map(|r| (id, r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &EntityRecord)> {
        self.tokens.iter().copied().zip(&self.records)
    }

    /// Build a corpus from in-memory records, interning each. Dependencies are
    /// taken as given.
    pub fn from_records(records: Vec<EntityRecord>, table: &mut TokenTable) -> Result<Self, CorpusError> {
        let lines = (1..=records.len()).map(Some).collect();
        Self::assemble(records, lines, table)
    }

    fn assemble(
        records: Vec<EntityRecord>,
        lines: Vec<Option<usize>>,
        table: &mut TokenTable,
    ) -> Result<Self, CorpusError> {
        let mut corpus = EntityCorpus { lines, ..Default::default() };
        for (i, record) in records.iter().enumerate() {
            let id = table.intern_entity(record);
            if corpus.by_token.insert(id, i).is_some() {
                let line = corpus.lines[i].unwrap_or(0);
                return Err(CorpusError::format(line, format!("duplicate entity {}", DisambiguatedName::of(record))));
            }
            corpus.tokens.push(id);
            corpus.source_index.entry(record.source_file.clone()).or_default().push(i);
        }
        corpus.records = records;
        corpus.context = suffix_aliases(&corpus.records);
        Ok(corpus)
    }
}

/// Map every proper path suffix to the entity it names, dropping ambiguous ones.
fn suffix_aliases(records: &[EntityRecord]) -> ResolutionContext {
    let mut seen: HashMap<String, Option<String>> = HashMap::new();
    for record in records {
        let key = DisambiguatedName::of(record).render();
        for path in [&record.name, &record.kernel_name] {
            let segments: Vec<&str> = path.split('.').collect();
            for start in 1..segments.len() {
                let suffix = segments[start..].join(".");
                seen.entry(suffix)
                    .and_modify(|slot| {
                        if slot.as_deref() != Some(key.as_str()) {
                            *slot = None;
                        }
                    })
                    .or_insert_with(|| Some(key.clone()));
            }
        }
    }
    let mut ctx = ResolutionContext::new();
    for (suffix, target) in seen {
        if let Some(target) = target {
            ctx.aliases.insert(suffix, target);
        }
    }
    ctx
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Non-blank lines after the header, with 1-based line numbers.
fn body_lines<R: BufRead>(reader: R, header: &str) -> Result<Vec<(usize, String)>, CorpusError> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::format(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim_end() != header {
                return Err(CorpusError::format(lineno, format!("expected header {header:?}")));
            }
            saw_header = true;
            continue;
        }
        out.push((lineno, line));
    }
    Ok(out)
}

pub fn load_entity_corpus(path: impl AsRef<Path>, table: &mut TokenTable) -> Result<EntityCorpus, CorpusError> {
    parse_entity_corpus(open(path.as_ref())?, table)
}

pub fn parse_entity_corpus<R: BufRead>(reader: R, table: &mut TokenTable) -> Result<EntityCorpus, CorpusError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut dep_names: Vec<Vec<String>> = Vec::new();
    for (lineno, line) in body_lines(reader, ENTITY_HEADER)? {
        let mut value: Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::format(lineno, format!("invalid JSON: {e}")))?;
        let obj = value.as_object_mut().ok_or_else(|| CorpusError::format(lineno, "record is not an object"))?;
        if !obj.contains_key("kernel_name") {
            if let Some(name) = obj.get("name").cloned() {
                obj.insert("kernel_name".into(), name);
            }
        }
        let deps = match obj.remove("dependencies") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    other => Err(CorpusError::format(lineno, format!("dependency {other} is not a name"))),
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(other) => {
                return Err(CorpusError::format(lineno, format!("dependencies must be a list, got {other}")))
            }
        };
        let record: EntityRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::format(lineno, format!("bad record: {e}")))?;
        if let Some(v) = record.violations().into_iter().next() {
            return Err(CorpusError::format(lineno, v));
        }
        let mut unique = BTreeSet::new();
        if let Some(dup) = deps.iter().find(|d| !unique.insert(d.as_str())) {
            return Err(CorpusError::format(lineno, format!("duplicate dependency {dup}")));
        }
        records.push(record);
        lines.push(Some(lineno));
        dep_names.push(deps);
    }

    // constructors of inductives, placed right after their type
    let present: BTreeSet<String> = records.iter().map(|r| r.name.clone()).collect();
    let mut expanded = Vec::with_capacity(records.len());
    let mut expanded_lines = Vec::with_capacity(records.len());
    let mut expanded_deps = Vec::with_capacity(records.len());
    for ((record, line), deps) in records.into_iter().zip(lines).zip(dep_names) {
        let ctors = if record.kind == EntityKind::Inductive { constructor_records(&record) } else { Vec::new() };
        let parent_key = DisambiguatedName::of(&record).render();
        expanded.push(record);
        expanded_lines.push(line);
        expanded_deps.push(deps);
        for ctor in ctors {
            if present.contains(&ctor.name) {
                continue;
            }
            expanded.push(ctor);
            expanded_lines.push(None);
            expanded_deps.push(vec![parent_key.clone()]);
        }
    }

    let mut corpus = EntityCorpus::assemble(expanded, expanded_lines, table)?;

    for (i, names) in expanded_deps.iter().enumerate() {
        let mut ids = Vec::with_capacity(names.len());
        for name in names {
            match table.resolve_name(name, &corpus.context) {
                Some(id) if !ids.contains(&id) => ids.push(id),
                Some(_) => {
                    return Err(CorpusError::format(
                        corpus.lines[i].unwrap_or(0),
                        format!("dependency {name} names an entity already listed"),
                    ))
                }
                None => {
                    log::warn!("{}: dependency {name} is not in the corpus", corpus.records[i].name);
                    corpus.dangling_dependencies += 1;
                }
            }
        }
        corpus.records[i].dependencies = ids;
    }

    // local-variable classes for binder types seen in internal texts
    let mut local_types = BTreeSet::new();
    for record in &corpus.records {
        for tok in table.tokenize_term(&record.internal, &corpus.context) {
            if let TokenClass::LocalVariable(ty) = tok.class {
                if !ty.is_empty() {
                    local_types.insert(ty);
                }
            }
        }
    }
    for ty in local_types {
        table.intern_local_type(&ty);
    }
    Ok(corpus)
}

/// Constructor clauses of an inductive's internal text, split at top-level `|`.
fn constructor_records(inductive: &EntityRecord) -> Vec<EntityRecord> {
    let mut clauses = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for c in inductive.internal.chars() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth -= 1,
            '|' if depth == 0 => {
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            _ => {}
        }
        current.push(c);
    }
    clauses.push(current);
    clauses
        .into_iter()
        .skip(1)
        .filter_map(|clause| {
            let (name, ty) = clause.split_once(':')?;
            let name = name.trim();
            let ty = ty.trim();
            if name.is_empty() || ty.is_empty() {
                return None;
            }
            let short = crate::model::short_name(name);
            let canonical = if name.contains('.') { name.to_string() } else { format!("{}.{short}", inductive.name) };
            let kernel = format!("{}.{short}", inductive.kernel_name);
            let mut rec = EntityRecord::new(canonical, EntityKind::Constructor, clause.trim(), ty)
                .with_kernel_name(kernel)
                .with_source_file(inductive.source_file.clone());
            rec.intuition = None;
            Some(rec)
        })
        .collect()
}

/// Write records in canonical order (by name, then kernel name). Dependencies
/// are written as rendered keys so the output reloads to the same entities.
pub fn write_entity_corpus<W: Write>(corpus: &EntityCorpus, table: &TokenTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{ENTITY_HEADER}")?;
    let mut order: Vec<usize> = (0..corpus.len()).filter(|&i| !corpus.is_synthesized(i)).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&corpus.records[a], &corpus.records[b]);
        (&ra.name, &ra.kernel_name).cmp(&(&rb.name, &rb.kernel_name))
    });
    for i in order {
        let record = &corpus.records[i];
        let mut value = serde_json::to_value(record).map_err(std::io::Error::other)?;
        let deps: Vec<Value> = record
            .dependencies
            .iter()
            .filter_map(|id| table.name_of(*id))
            .map(|dn| Value::String(dn.render()))
            .collect();
        if let Some(obj) = value.as_object_mut() {
            obj.insert("dependencies".into(), Value::Array(deps));
        }
        writeln!(out, "{}", serde_json::to_string(&value).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct ProofCorpus {
    pub proofs: Vec<InteractiveProof>,
    by_theorem: HashMap<String, usize>,
}

impl ProofCorpus {
    pub fn get(&self, theorem_name: &str) -> Option<&InteractiveProof> {
        self.by_theorem.get(theorem_name).map(|&i| &self.proofs[i])
    }

    pub fn len(&self) -> usize {
        self.proofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proofs.is_empty()
    }

    /// Every (tactic, state-before) pair in the corpus.
    pub fn tactic_examples(&self) -> impl Iterator<Item = (&str, &ProofState)> {
        self.proofs.iter().flat_map(|p| p.steps.iter().map(|s| (s.tactic.as_str(), &s.before)))
    }
}

pub fn load_proof_corpus(path: impl AsRef<Path>) -> Result<ProofCorpus, CorpusError> {
    parse_proof_corpus(open(path.as_ref())?)
}

pub fn parse_proof_corpus<R: BufRead>(reader: R) -> Result<ProofCorpus, CorpusError> {
    let mut corpus = ProofCorpus::default();
    for (lineno, line) in body_lines(reader, PROOF_HEADER)? {
        let proof: InteractiveProof =
            serde_json::from_str(&line).map_err(|e| CorpusError::format(lineno, format!("bad proof: {e}")))?;
        if proof.theorem_name.trim().is_empty() {
            return Err(CorpusError::format(lineno, "empty theorem_name"));
        }
        if let Some(v) = validate_proof_chain(&proof).into_iter().next() {
            return Err(CorpusError::format(lineno, format!("proof {}: {v}", proof.theorem_name)));
        }
        if corpus.by_theorem.insert(proof.theorem_name.clone(), corpus.proofs.len()).is_some() {
            return Err(CorpusError::format(lineno, format!("duplicate proof of {}", proof.theorem_name)));
        }
        corpus.proofs.push(proof);
    }
    Ok(corpus)
}

pub fn write_proof_corpus<W: Write>(corpus: &ProofCorpus, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PROOF_HEADER}")?;
    let mut proofs: Vec<&InteractiveProof> = corpus.proofs.iter().collect();
    proofs.sort_by(|a, b| a.theorem_name.cmp(&b.theorem_name));
    for proof in proofs {
        writeln!(out, "{}", serde_json::to_string(proof).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

/// Global tokens referenced by a state, closed under dependencies `depth` times.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConceptSet {
    pub tokens: BTreeSet<TokenId>,
    pub depth: usize,
}

impl ConceptSet {
    pub fn contains(&self, id: TokenId) -> bool {
        self.tokens.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Globals of a term, resolved against the corpus aliases plus `locals`.
fn term_globals(table: &TokenTable, ctx: &ResolutionContext, text: &str) -> Vec<TokenId> {
    table
        .tokenize_term(text, ctx)
        .into_iter()
        .filter(|t| t.class == TokenClass::GlobalIdentifier)
        .filter_map(|t| t.id)
        .collect()
}

pub fn extract_concepts(corpus: &EntityCorpus, table: &TokenTable, state: &ProofState, depth: usize) -> ConceptSet {
    let mut tokens = BTreeSet::new();
    for goal in &state.goals {
        let mut ctx = corpus.resolution_context().clone();
        for h in &goal.hypotheses_internal {
            ctx.locals.insert(h.name.clone(), h.ty.clone());
        }
        tokens.extend(term_globals(table, &ctx, &goal.goal_internal));
        for h in &goal.hypotheses_internal {
            tokens.extend(term_globals(table, &ctx, &h.ty));
        }
    }
    let mut frontier: Vec<TokenId> = tokens.iter().copied().collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for id in frontier {
            let Some(record) = corpus.record(id) else { continue };
            let deps = if record.dependencies.is_empty() {
                term_globals(table, corpus.resolution_context(), &record.internal)
            } else {
                record.dependencies.clone()
            };
            for dep in deps {
                if tokens.insert(dep) {
                    next.push(dep);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    ConceptSet { tokens, depth }
}

/// Logical module of an entity: its canonical path minus the final identifier
/// (minus the inductive segment too, for constructors).
pub fn module_of(record: &EntityRecord) -> Option<String> {
    let segments: Vec<&str> = record.name.split('.').collect();
    let drop = if record.kind == EntityKind::Constructor { 2 } else { 1 };
    (segments.len() > drop).then(|| segments[..segments.len() - drop].join("."))
}

/// One `Require Import` per distinct module, sorted.
pub fn generate_require(corpus: &EntityCorpus, tokens: &BTreeSet<TokenId>) -> Result<Vec<String>, CorpusError> {
    let mut modules = BTreeSet::new();
    for &id in tokens {
        let record = corpus.record(id).ok_or(CorpusError::UnknownToken(id))?;
        if let Some(module) = module_of(record) {
            modules.insert(module);
        }
    }
    Ok(modules.into_iter().map(|m| format!("Require Import {m}.")).collect())
}

/// `Require Import` lines for the corpus entities a statement mentions,
/// plus those of `extra` (typically the theorem's recorded dependencies).
pub fn statement_requires(
    corpus: &EntityCorpus,
    table: &TokenTable,
    statement: &str,
    extra: &[TokenId],
) -> Vec<String> {
    let mut tokens: BTreeSet<TokenId> = table
        .tokenize_term(statement, corpus.resolution_context())
        .into_iter()
        .filter(|t| t.class == TokenClass::GlobalIdentifier)
        .filter_map(|t| t.id)
        .collect();
    tokens.extend(extra.iter().copied());
    tokens.retain(|id| corpus.record(*id).is_some());
    generate_require(corpus, &tokens).unwrap_or_default()
}
