//! Semantic tokenization of Coq names.
//!
//! A [`TokenTable`] hands out one [`TokenId`] per distinct entity, where an
//! entity is identified by its canonical path together with its kernel path
//! (rendered `canonical<ker>kernel`). Aliases resolve to the entity they name,
//! never to a fresh id. Bound variables are tokenized by their type, and the
//! reserved vocabulary (keywords, punctuation, proof-state markers) is interned
//! first so its ids are stable across tables.
//!
//! Interning needs `&mut TokenTable`; resolution and tokenization only read.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::{normalize_ws, EntityRecord};

/// Separator between canonical and kernel path in a rendered name.
pub const KER_SEPARATOR: &str = "<ker>";

/// Version tag of [`RESERVED_TOKENS`]; bump whenever the list changes.
pub const RESERVED_VERSION: &str = "reserved-v1";

/// Reserved vocabulary, interned in this order at ids `0..RESERVED_TOKENS.len()`.
pub const RESERVED_TOKENS: &[&str] = &[
    // proof-state markers
    "_Anonymous",
    "goalcompleted",
    "REL",
    "NUMERAL",
    // punctuation and binders
    "(",
    ")",
    "{",
    "}",
    "[",
    "]",
    ",",
    ";",
    ":",
    ":=",
    "=>",
    "->",
    "<-",
    "<->",
    "|",
    "@",
    "_",
    ".",
    // term keywords
    "forall",
    "exists",
    "fun",
    "let",
    "in",
    "match",
    "with",
    "end",
    "as",
    "return",
    "fix",
    "cofix",
    "struct",
    "if",
    "then",
    "else",
    "Type",
    "Prop",
    "Set",
    "SProp",
    // hint databases
    "core",
    "arith",
    "zarith",
    "datatypes",
    "sets",
    "typeclass_instances",
    // internal tactics
    "idtac",
    "fail",
    "intros",
    "intro",
    "exact",
    "apply",
    "refine",
    "simpl",
    "reflexivity",
    "assumption",
    "split",
    "rewrite",
    "induction",
    "destruct",
    "auto",
    "trivial",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenClass {
    GlobalIdentifier,
    /// Bound or free variable, identified by its type text (empty when unknown).
    LocalVariable(String),
    Reserved(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DisambiguatedName {
    pub canonical_path: String,
    pub kernel_path: String,
}

impl DisambiguatedName {
    pub fn new(canonical_path: impl Into<String>, kernel_path: impl Into<String>) -> Self {
        DisambiguatedName { canonical_path: canonical_path.into(), kernel_path: kernel_path.into() }
    }

    pub fn of(entity: &EntityRecord) -> Self {
        DisambiguatedName::new(entity.name.clone(), entity.kernel_name.clone())
    }

    pub fn render(&self) -> String {
        format!("{}{}{}", self.canonical_path, KER_SEPARATOR, self.kernel_path)
    }

    pub fn parse(rendered: &str) -> Option<Self> {
        let (canonical, kernel) = rendered.split_once(KER_SEPARATOR)?;
        if canonical.is_empty() || kernel.is_empty() || kernel.contains(KER_SEPARATOR) {
            return None;
        }
        Some(DisambiguatedName::new(canonical, kernel))
    }
}

impl fmt::Display for DisambiguatedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.canonical_path, KER_SEPARATOR, self.kernel_path)
    }
}

/// What a token id stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TokenEntry {
    Global(DisambiguatedName),
    Local(String),
    Reserved(String),
}

impl TokenEntry {
    pub fn class(&self) -> TokenClass {
        match self {
            TokenEntry::Global(_) => TokenClass::GlobalIdentifier,
            TokenEntry::Local(ty) => TokenClass::LocalVariable(ty.clone()),
            TokenEntry::Reserved(label) => TokenClass::Reserved(label.clone()),
        }
    }
}

/// Where a name is being resolved: module, open aliases, local bindings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResolutionContext {
    /// Module the reference occurs in, e.g. `Coq.Arith.PeanoNat`.
    pub current_module: Option<String>,
    /// Modules whose contents are visible unqualified (`Import`).
    pub open_modules: Vec<String>,
    /// Alias or partial path -> full canonical or kernel path. A key may also
    /// name a module prefix, in which case it rewrites the leading segments.
    pub aliases: BTreeMap<String, String>,
    /// Section variables and hypotheses in scope, with their type text.
    pub locals: BTreeMap<String, String>,
}

impl ResolutionContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_alias(mut self, alias: impl Into<String>, target: impl Into<String>) -> Self {
        self.aliases.insert(alias.into(), target.into());
        self
    }

    pub fn with_local(mut self, name: impl Into<String>, ty: impl Into<String>) -> Self {
        self.locals.insert(name.into(), ty.into());
        self
    }

    pub fn with_open_module(mut self, module: impl Into<String>) -> Self {
        self.open_modules.push(module.into());
        self
    }
}

/// One lexeme of a tokenized term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub lexeme: String,
    pub class: TokenClass,
    pub id: Option<TokenId>,
}

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only name -> id table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTable {
    entries: HashMap<DisambiguatedName, TokenId>,
    reverse: Vec<TokenEntry>,
    locals: HashMap<String, TokenId>,
    reserved: HashMap<String, TokenId>,
    by_canonical: HashMap<String, Vec<TokenId>>,
    by_kernel: HashMap<String, Vec<TokenId>>,
}

impl Default for TokenTable {
    fn default() -> Self {
        Self::new()
    }
}

impl TokenTable {
    /// A table holding only the reserved vocabulary.
    pub fn new() -> Self {
        let mut table = TokenTable {
            entries: HashMap::new(),
            reverse: Vec::new(),
            locals: HashMap::new(),
            reserved: HashMap::new(),
            by_canonical: HashMap::new(),
            by_kernel: HashMap::new(),
        };
        for label in RESERVED_TOKENS {
            table.push(TokenEntry::Reserved((*label).to_string()));
        }
        table
    }

    fn push(&mut self, entry: TokenEntry) -> TokenId {
        let id = TokenId(self.reverse.len() as u32);
        match &entry {
            TokenEntry::Global(dn) => {
                self.entries.insert(dn.clone(), id);
                self.by_canonical.entry(dn.canonical_path.clone()).or_default().push(id);
                self.by_kernel.entry(dn.kernel_path.clone()).or_default().push(id);
            }
            TokenEntry::Local(ty) => {
                self.locals.insert(ty.clone(), id);
            }
            TokenEntry::Reserved(label) => {
                self.reserved.insert(label.clone(), id);
            }
        }
        self.reverse.push(entry);
        id
    }

    pub fn intern_entity(&mut self, entity: &EntityRecord) -> TokenId {
        self.intern_name(DisambiguatedName::of(entity))
    }

    pub fn intern_name(&mut self, name: DisambiguatedName) -> TokenId {
        if let Some(id) = self.entries.get(&name) {
            return *id;
        }
        self.push(TokenEntry::Global(name))
    }

    /// Id shared by every local variable of this type.
    pub fn intern_local_type(&mut self, ty: &str) -> TokenId {
        let ty = normalize_ws(ty);
        if let Some(id) = self.locals.get(&ty) {
            return *id;
        }
        self.push(TokenEntry::Local(ty))
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    pub fn next_id(&self) -> TokenId {
        TokenId(self.reverse.len() as u32)
    }

    pub fn entry(&self, id: TokenId) -> Option<&TokenEntry> {
        self.reverse.get(id.0 as usize)
    }

    pub fn name_of(&self, id: TokenId) -> Option<&DisambiguatedName> {
        match self.entry(id)? {
            TokenEntry::Global(dn) => Some(dn),
            _ => None,
        }
    }

    pub fn lookup(&self, name: &DisambiguatedName) -> Option<TokenId> {
        self.entries.get(name).copied()
    }

    pub fn reserved_id(&self, label: &str) -> Option<TokenId> {
        self.reserved.get(label).copied()
    }

    pub fn local_id(&self, ty: &str) -> Option<TokenId> {
        self.locals.get(&normalize_ws(ty)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &TokenEntry)> {
        self.reverse.iter().enumerate().map(|(i, e)| (TokenId(i as u32), e))
    }

    /// Exact path lookup: rendered key, canonical path, then kernel path.
    /// A canonical path shared by several entities resolves to the oldest.
    fn lookup_path(&self, path: &str) -> Option<TokenId> {
        if let Some(dn) = DisambiguatedName::parse(path) {
            return self.lookup(&dn);
        }
        self.by_canonical.get(path).or_else(|| self.by_kernel.get(path)).and_then(|ids| ids.first().copied())
    }

    /// Resolve a reference to the global entity it denotes.
    ///
    /// Locals in the context shadow globals. Then, in order: exact alias,
    /// module-prefix alias, exact path, and qualification by the current
    /// module and the open modules. `None` means no global entity.
    pub fn resolve_name(&self, name: &str, context: &ResolutionContext) -> Option<TokenId> {
        if name.is_empty() || context.locals.contains_key(name) {
            return None;
        }
        if let Some(target) = context.aliases.get(name) {
            if let Some(id) = self.lookup_path(target) {
                return Some(id);
            }
        }
        // longest module-prefix alias first
        let segments: Vec<&str> = name.split('.').collect();
        for cut in (1..segments.len()).rev() {
            let prefix = segments[..cut].join(".");
            if let Some(target) = context.aliases.get(&prefix) {
                let rewritten = format!("{}.{}", target, segments[cut..].join("."));
                if let Some(id) = self.lookup_path(&rewritten) {
                    return Some(id);
                }
            }
        }
        if let Some(id) = self.lookup_path(name) {
            return Some(id);
        }
        context
            .current_module
            .iter()
            .chain(&context.open_modules)
            .find_map(|module| self.lookup_path(&format!("{module}.{name}")))
    }

    /// Split an internal representation into classified tokens.
    ///
    /// Never fails: anything unresolvable becomes a local variable, typed when
    /// a binder or the context supplies the type and untyped otherwise.
    pub fn tokenize_term(&self, internal_text: &str, context: &ResolutionContext) -> Vec<Token> {
        let lexemes = lex(internal_text);
        let binder_types = binder_types(&lexemes);
        lexemes.into_iter().map(|lexeme| self.classify(lexeme, context, &binder_types)).collect()
    }

    fn classify(&self, lexeme: String, context: &ResolutionContext, binders: &HashMap<String, String>) -> Token {
        if let Some(id) = self.reserved_id(&lexeme) {
            return Token { class: TokenClass::Reserved(lexeme.clone()), id: Some(id), lexeme };
        }
        if is_numeral(&lexeme) {
            let id = self.reserved_id("NUMERAL");
            return Token { lexeme, class: TokenClass::Reserved("NUMERAL".into()), id };
        }
        if let Some(ty) = binders.get(&lexeme).or_else(|| context.locals.get(&lexeme)) {
            let ty = normalize_ws(ty);
            let id = if ty.is_empty() { None } else { self.local_id(&ty) };
            return Token { lexeme, class: TokenClass::LocalVariable(ty), id };
        }
        if is_identifier(&lexeme) {
            if let Some(id) = self.resolve_name(&lexeme, context) {
                return Token { lexeme, class: TokenClass::GlobalIdentifier, id: Some(id) };
            }
        }
        Token { lexeme, class: TokenClass::LocalVariable(String::new()), id: None }
    }

    /// Fraction of identifier lexemes that resolve to a global entity.
    ///
    /// Reserved words, numerals and binder-bound variables are not counted.
    pub fn coverage_report(&self, corpus_terms: &[String], context: &ResolutionContext) -> CoverageReport {
        let mut total = 0usize;
        let mut resolved = 0usize;
        let mut unresolved: BTreeMap<String, usize> = BTreeMap::new();
        for term in corpus_terms {
            let lexemes = lex(term);
            let binders = binder_types(&lexemes);
            for lexeme in lexemes {
                if !is_identifier(&lexeme)
                    || self.reserved_id(&lexeme).is_some()
                    || binders.contains_key(&lexeme)
                    || context.locals.contains_key(&lexeme)
                {
                    continue;
                }
                total += 1;
                if self.resolve_name(&lexeme, context).is_some() {
                    resolved += 1;
                } else {
                    *unresolved.entry(lexeme).or_default() += 1;
                }
            }
        }
        let resolved_fraction = if total == 0 { 1.0 } else { resolved as f64 / total as f64 };
        CoverageReport { resolved_fraction, identifier_count: total, unresolved_lexemes: unresolved }
    }

    /// Line-oriented vocabulary: `<id>\t<key>\t<class>`, sorted by id.
    pub fn write_vocab<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, entry) in self.iter() {
            let (key, class) = match entry {
                TokenEntry::Global(dn) => (dn.render(), "Global"),
                TokenEntry::Local(ty) => (ty.clone(), "Local"),
                TokenEntry::Reserved(label) => (label.clone(), "Reserved"),
            };
            writeln!(out, "{id}\t{key}\t{class}")?;
        }
        Ok(())
    }

    pub fn read_vocab<R: BufRead>(input: R) -> Result<Self, VocabError> {
        let mut table = TokenTable {
            entries: HashMap::new(),
            reverse: Vec::new(),
            locals: HashMap::new(),
            reserved: HashMap::new(),
            by_canonical: HashMap::new(),
            by_kernel: HashMap::new(),
        };
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let err = |message: String| VocabError::Format { line: lineno, message };
            let mut cols = line.split('\t');
            let (Some(id), Some(key), Some(class), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(err("expected three tab-separated columns".into()));
            };
            let id: u32 = id.parse().map_err(|_| err(format!("bad id {id:?}")))?;
            if id as usize != table.reverse.len() {
                return Err(err(format!("id {id} out of sequence, expected {}", table.reverse.len())));
            }
            let entry = match class {
                "Global" => TokenEntry::Global(
                    DisambiguatedName::parse(key).ok_or_else(|| err(format!("bad global key {key:?}")))?,
                ),
                "Local" => TokenEntry::Local(key.to_string()),
                "Reserved" => TokenEntry::Reserved(key.to_string()),
                other => return Err(err(format!("unknown class {other:?}"))),
            };
            if let TokenEntry::Global(dn) = &entry {
                if table.entries.contains_key(dn) {
                    return Err(err(format!("duplicate entry {dn}")));
                }
            }
            table.push(entry);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub resolved_fraction: f64,
    pub identifier_count: usize,
    pub unresolved_lexemes: BTreeMap<String, usize>,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '.'
}

fn is_bracket(c: char) -> bool {
    matches!(c, '(' | ')' | '{' | '}' | '[' | ']' | ',' | ';')
}

fn is_numeral(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit())
}

/// Dotted path starting with a letter or underscore.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && s.chars().all(is_ident_char)
        && s.split('.').all(|seg| !seg.is_empty())
}

/// Whitespace-first lexer with dotted-path identifiers.
///
/// Identifier runs are maximal; brackets, commas and semicolons are single
/// lexemes; any other run of symbol characters is one operator lexeme.
pub fn lex(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let start = i;
            if is_ident_char(c) && c != '.' {
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                // a trailing dot ends the sentence, it is not part of the path
                let mut end = i;
                while end > start + 1 && chars[end - 1] == '.' {
                    end -= 1;
                }
                out.push(chars[start..end].iter().collect());
                for _ in end..i {
                    out.push(".".to_string());
                }
            } else if is_bracket(c) {
                i += 1;
                out.push(c.to_string());
            } else {
                while i < chars.len() && !is_ident_char(chars[i]) && !is_bracket(chars[i]) {
                    i += 1;
                }
                if i == start {
                    // lone dot
                    i += 1;
                }
                out.push(chars[start..i].iter().collect());
            }
        }
    }
    out
}

/// Types of variables bound by `forall`/`fun`/`exists` binders in the lexeme stream.
///
/// Recognizes `(x y : T)` groups and the unparenthesized `forall x y : T,` form.
fn binder_types(lexemes: &[String]) -> HashMap<String, String> {
    let mut out = HashMap::new();
    let mut i = 0;
    while i < lexemes.len() {
        let starts_branch = lexemes[i] == "|" || (lexemes[i] == "with" && lexemes.get(i + 1).is_some_and(|l| l != "|"));
        if starts_branch {
            // `| C x y =>`: everything after the constructor is a pattern variable
            let mut j = i + 1;
            let mut seen_head = false;
            while j < lexemes.len() && !matches!(lexemes[j].as_str(), "=>" | "|" | ":") {
                if is_identifier(&lexemes[j]) {
                    if seen_head && !lexemes[j].contains('.') {
                        out.entry(lexemes[j].clone()).or_default();
                    }
                    seen_head = true;
                }
                j += 1;
            }
            i += 1;
            continue;
        }
        if lexemes[i] == "fix" {
            // the recursive function name is bound in its own body
            if let Some(name) = lexemes.get(i + 1).filter(|l| is_identifier(l)) {
                out.entry(name.clone()).or_default();
            }
            i += 2;
        } else if matches!(lexemes[i].as_str(), "forall" | "fun" | "exists") {
            i += 1;
        } else {
            i += 1;
            continue;
        }
        loop {
            if i < lexemes.len() && lexemes[i] == "(" {
                // ( names : type )
                let mut j = i + 1;
                let mut names = Vec::new();
                while j < lexemes.len() && lexemes[j] != ":" && lexemes[j] != ")" {
                    names.push(lexemes[j].clone());
                    j += 1;
                }
                if j >= lexemes.len() || lexemes[j] != ":" {
                    break;
                }
                let mut depth = 0usize;
                let mut k = j + 1;
                let mut ty = Vec::new();
                while k < lexemes.len() {
                    match lexemes[k].as_str() {
                        "(" => depth += 1,
                        ")" if depth == 0 => break,
                        ")" => depth -= 1,
                        _ => {}
                    }
                    ty.push(lexemes[k].as_str());
                    k += 1;
                }
                let ty = ty.join(" ");
                for name in names {
                    out.insert(name, ty.clone());
                }
                i = k + 1;
            } else {
                // x y : T ,
                let mut j = i;
                let mut names = Vec::new();
                while j < lexemes.len() && is_identifier(&lexemes[j]) && lexemes[j] != ":" {
                    names.push(lexemes[j].clone());
                    j += 1;
                }
                if !names.is_empty() && j < lexemes.len() && lexemes[j] == ":" {
                    let mut k = j + 1;
                    let mut ty = Vec::new();
                    while k < lexemes.len() && lexemes[k] != "," && lexemes[k] != "=>" {
                        ty.push(lexemes[k].as_str());
                        k += 1;
                    }
                    let ty = ty.join(" ");
                    for name in names {
                        out.insert(name, ty.clone());
                    }
                    i = k;
                } else {
                    for name in names {
                        out.entry(name).or_default();
                    }
                    i = j;
                }
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityKind;

    fn entity(name: &str, kernel: &str) -> EntityRecord {
        EntityRecord::new(name, EntityKind::Definition, "Definition x := 0.", "nat").with_kernel_name(kernel)
    }

    #[test]
    fn interning_is_idempotent() {
        let mut t = TokenTable::new();
        let e = entity("Coq.Init.Nat.add", "Coq.Init.Nat.add");
        let a = t.intern_entity(&e);
        let b = t.intern_entity(&e);
        assert_eq!(a, b);
        assert_eq!(a, TokenId(RESERVED_TOKENS.len() as u32));
    }

    #[test]
    fn kernel_name_rendering() {
        let mut t = TokenTable::new();
        let id = t.intern_entity(&entity("Coq.ZArith.BinInt.Z.quotrem", "Coq.ZArith.BinIntDef.Z.quotrem"));
        assert_eq!(t.name_of(id).unwrap().render(), "Coq.ZArith.BinInt.Z.quotrem<ker>Coq.ZArith.BinIntDef.Z.quotrem");
    }

    #[test]
    fn shared_canonical_distinct_kernel() {
        let mut t = TokenTable::new();
        let a = t.intern_entity(&entity("M.f", "M.Impl1.f"));
        let b = t.intern_entity(&entity("M.f", "M.Impl2.f"));
        assert_ne!(a, b);
    }

    #[test]
    fn aliases_resolve_to_same_token() {
        let mut t = TokenTable::new();
        let id = t.intern_entity(&entity("Coq.Init.Nat.add", "Coq.Init.Nat.add"));
        let ctx = ResolutionContext::new().with_alias("Nat.add", "Coq.Init.Nat.add");
        assert_eq!(t.resolve_name("Nat.add", &ctx), Some(id));
        assert_eq!(t.resolve_name("Coq.Init.Nat.add", &ctx), Some(id));
        let module_alias = ResolutionContext::new().with_alias("Nat", "Coq.Init.Nat");
        assert_eq!(t.resolve_name("Nat.add", &module_alias), Some(id));
        let opened = ResolutionContext::new().with_open_module("Coq.Init.Nat");
        assert_eq!(t.resolve_name("add", &opened), Some(id));
    }

    #[test]
    fn unknown_name_is_not_found() {
        let t = TokenTable::new();
        assert_eq!(t.resolve_name("Foo.bar", &ResolutionContext::new()), None);
    }

    #[test]
    fn section_local_shadows_global() {
        let mut t = TokenTable::new();
        let global = t.intern_entity(&entity("Top.x", "Top.x"));
        let outside = ResolutionContext { current_module: Some("Top".into()), ..Default::default() };
        // direct lookup oracle: outside the section the short name hits the table entry
        assert_eq!(t.lookup(&DisambiguatedName::new("Top.x", "Top.x")), Some(global));
        assert_eq!(t.resolve_name("x", &outside), Some(global));
        let inside = outside.clone().with_local("x", "nat");
        assert_eq!(t.resolve_name("x", &inside), None);
        let toks = t.tokenize_term("x", &inside);
        assert_eq!(toks[0].class, TokenClass::LocalVariable("nat".into()));
    }

    #[test]
    fn tokenize_quotrem_fragment() {
        let mut t = TokenTable::new();
        let eq = t.intern_entity(&entity("Coq.Init.Logic.eq.eq", "Coq.Init.Logic.eq.eq"));
        let toks = t.tokenize_term("( Coq.Init.Logic.eq.eq B )", &ResolutionContext::new());
        let classes: Vec<_> = toks.iter().map(|t| t.class.clone()).collect();
        assert_eq!(
            classes,
            vec![
                TokenClass::Reserved("(".into()),
                TokenClass::GlobalIdentifier,
                TokenClass::LocalVariable(String::new()),
                TokenClass::Reserved(")".into()),
            ]
        );
        assert_eq!(toks[1].id, Some(eq));
        assert_eq!(toks[2].lexeme, "B");
    }

    #[test]
    fn tokenize_edge_cases() {
        let t = TokenTable::new();
        assert!(t.tokenize_term("", &ResolutionContext::new()).is_empty());
        let toks = t.tokenize_term("mystery", &ResolutionContext::new());
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].class, TokenClass::LocalVariable(String::new()));
        assert_eq!(toks[0].id, None);
    }

    #[test]
    fn binders_give_local_types() {
        let mut t = TokenTable::new();
        let nat_local = t.intern_local_type("nat");
        let toks = t.tokenize_term("forall (a b:nat), eq nat a b", &ResolutionContext::new());
        let a: Vec<_> = toks.iter().filter(|t| t.lexeme == "a").collect();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|t| t.class == TokenClass::LocalVariable("nat".into()) && t.id == Some(nat_local)));
        let toks = t.tokenize_term("forall n m : nat, n = m", &ResolutionContext::new());
        let m = toks.iter().find(|t| t.lexeme == "m").unwrap();
        assert_eq!(m.class, TokenClass::LocalVariable("nat".into()));
    }

    #[test]
    fn fix_and_match_bind_locals() {
        let mut t = TokenTable::new();
        t.intern_entity(&entity("N.S", "N.S"));
        t.intern_entity(&entity("N.nat", "N.nat"));
        let ctx = ResolutionContext::new().with_alias("S", "N.S").with_alias("nat", "N.nat");
        let r =
            t.coverage_report(&["fix add (n m : nat) := match n with | O => m | S p => S (add p m) end".into()], &ctx);
        // only O is unknown; n, m, p and add are bound
        assert_eq!(r.unresolved_lexemes.keys().collect::<Vec<_>>(), ["O"]);
        let r = t.coverage_report(&["nat : Set | N.S : nat -> nat".into()], &ctx);
        assert_eq!(r.resolved_fraction, 1.0);
        assert_eq!(r.identifier_count, 4);
    }

    #[test]
    fn lexer_grammar() {
        assert_eq!(
            lex("fun ( F : forall ( _Anonymous : A ) -> B ) => ( f x )."),
            vec![
                "fun",
                "(",
                "F",
                ":",
                "forall",
                "(",
                "_Anonymous",
                ":",
                "A",
                ")",
                "->",
                "B",
                ")",
                "=>",
                "(",
                "f",
                "x",
                ")",
                "."
            ]
        );
        assert_eq!(lex("True: Prop | Coq.Init.Logic.True.I"), vec!["True", ":", "Prop", "|", "Coq.Init.Logic.True.I"]);
        assert_eq!(lex("a+b:=c"), vec!["a", "+", "b", ":=", "c"]);
    }

    #[test]
    fn coverage_counts() {
        let mut t = TokenTable::new();
        t.intern_entity(&entity("A.f", "A.f"));
        t.intern_entity(&entity("A.g", "A.g"));
        let ctx = ResolutionContext::new();
        assert_eq!(t.coverage_report(&["A.f (A.g 0)".into()], &ctx).resolved_fraction, 1.0);
        let r = t.coverage_report(&["A.f Z.h".into()], &ctx);
        assert_eq!(r.resolved_fraction, 0.5);
        assert_eq!(r.unresolved_lexemes.get("Z.h"), Some(&1));
    }

    #[test]
    fn coverage_on_thousand_lexemes() {
        let mut t = TokenTable::new();
        for i in 0..50 {
            t.intern_name(DisambiguatedName::new(format!("L.c{i}"), format!("L.c{i}")));
        }
        // 998 known identifiers and 2 unknown ones
        let mut words: Vec<String> = (0..998).map(|i| format!("L.c{}", i % 50)).collect();
        words.insert(100, "X.unknown".into());
        words.insert(700, "Y.unknown".into());
        let terms: Vec<String> = words.chunks(10).map(|c| c.join(" ")).collect();
        // counting oracle
        let known = words.iter().filter(|w| w.starts_with("L.")).count();
        let expected = known as f64 / words.len() as f64;
        let r = t.coverage_report(&terms, &ResolutionContext::new());
        assert_eq!(r.identifier_count, 1000);
        assert!((expected - 0.998).abs() < 1e-15);
        assert!((r.resolved_fraction - 0.998).abs() < 1e-15);
    }

    #[test]
    fn vocab_round_trip() {
        let mut t = TokenTable::new();
        t.intern_entity(&entity("Coq.ZArith.BinInt.Z.quotrem", "Coq.ZArith.BinIntDef.Z.quotrem"));
        t.intern_local_type("nat");
        t.intern_entity(&entity("Coq.Init.Nat.add", "Coq.Init.Nat.add"));
        let mut buf = Vec::new();
        t.write_vocab(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\tCoq.ZArith.BinInt.Z.quotrem<ker>Coq.ZArith.BinIntDef.Z.quotrem\tGlobal\n"));
        let back = TokenTable::read_vocab(&buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn vocab_rejects_gaps() {
        let err = TokenTable::read_vocab("0\t(\tReserved\n2\t)\tReserved\n".as_bytes()).unwrap_err();
        assert!(matches!(err, VocabError::Format { line: 2, .. }));
    }
}
