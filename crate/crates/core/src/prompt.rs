//! Prompt rendering.
//!
//! Templates live in `templates/` and use Python `str.format` conventions:
//! `{field}` is substituted once, `{{` and `}}` are literal braces. Substituted
//! values are never rescanned.
//!
//! Inclusion table for the proving prompt:
//!
//! | configuration      | names     | glob defs | origin | internal | intuition | techniques |
//! |--------------------|-----------|-----------|--------|----------|-----------|------------|
//! | NoContext          | short     | -         | -      | -        | -         | -          |
//! | QualifiedName      | qualified | -         | -      | -        | -         | -          |
//! | EmptyReference     | qualified | header    | -      | -        | -         | yes        |
//! | OriginOnly         | qualified | yes       | yes    | -        | -         | yes        |
//! | InternalOnly       | qualified | yes       | -      | yes      | -         | yes        |
//! | IntuitionOnly      | qualified | yes       | -      | -        | yes       | yes        |
//! | OriginInternal     | qualified | yes       | yes    | yes      | -         | yes        |
//! | OriginIntuition    | qualified | yes       | yes    | -        | yes       | yes        |
//! | InternalIntuition  | qualified | yes       | -      | yes      | yes       | yes        |
//! | Complete           | qualified | yes       | yes    | yes      | yes       | yes        |
//! | ChineseTranslation | qualified | yes       | yes*   | yes*     | yes*      | yes        |
//!
//! "Techniques" are the trace, premise, tactic, notes and hint sections.
//! `*` uses the `_zh` record fields, falling back to the untranslated text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{short_name, EntityRecord, GoalState, ProofState, TraceEntry};
use crate::tokenizer::TokenId;

pub const TEMPLATE_VERSION: &str = "v1";

const PROVE: &str = include_str!("../templates/prove.txt");
const PLANNER: &str = include_str!("../templates/planner.txt");
const ERRORS: &str = include_str!("../templates/errors.txt");
const EXPLAIN: &str = include_str!("../templates/explain.txt");
const SUMMARY: &str = include_str!("../templates/summary.txt");
const NOTES: &str = include_str!("../templates/notes.txt");
const RANK: &str = include_str!("../templates/rank.txt");
const INFO: &str = include_str!("../templates/info.txt");
const PROBE: &str = include_str!("../templates/probe.txt");
const JUDGE: &str = include_str!("../templates/judge.txt");

/// Every shipped template, by file stem.
pub fn templates() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("prove", PROVE),
        ("planner", PLANNER),
        ("errors", ERRORS),
        ("explain", EXPLAIN),
        ("summary", SUMMARY),
        ("notes", NOTES),
        ("rank", RANK),
        ("info", INFO),
        ("probe", PROBE),
        ("judge", JUDGE),
    ])
}

/// Lines that identify each prompt kind, for logs and offline models.
pub mod markers {
    pub const PROVE: &str = "=== Available Actions ===";
    pub const PLANNER: &str = "=== Strategic Analysis Request ===";
    pub const ERRORS: &str = "=== Compiler Errors ===";
    pub const EXPLAIN: &str = "=== Tactic Explanation Request ===";
    pub const SUMMARY: &str = "=== Proof Summary Request ===";
    pub const NOTES: &str = "=== Public Notes Update ===";
    pub const RANK: &str = "=== Candidate Ranking ===";
    pub const INFO: &str = "=== Requested Information ===";
    pub const PROBE: &str = "please provide the strict Coq definition of the concept";
    pub const JUDGE: &str = "Answer: YES or NO";
    pub const JUDGE_REFERENCE: &str = "=== Reference Definition ===";
    pub const GLOB_DEF: &str = "Global definitions referenced:";
    pub const TRACING: &str = "=== Proof Tracing ===";
}

/// Single-pass `str.format`-style substitution. Unknown fields are left as is.
pub fn fill(template: &str, fields: &[(&str, &str)]) -> String {
    let template = template.strip_suffix('\n').unwrap_or(template);
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push(tail.as_bytes()[0] as char);
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('{') {
            if let Some(end) = tail.find('}') {
                let key = &tail[1..end];
                if let Some((_, value)) = fields.iter().find(|(k, _)| *k == key) {
                    out.push_str(value);
                    rest = &tail[end + 1..];
                    continue;
                }
            }
        }
        out.push(tail.as_bytes()[0] as char);
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoConfiguration {
    NoContext,
    QualifiedName,
    EmptyReference,
    OriginOnly,
    InternalOnly,
    IntuitionOnly,
    OriginInternal,
    OriginIntuition,
    InternalIntuition,
    #[default]
    Complete,
    ChineseTranslation,
}

impl InfoConfiguration {
    pub const ALL: [InfoConfiguration; 11] = [
        InfoConfiguration::NoContext,
        InfoConfiguration::QualifiedName,
        InfoConfiguration::EmptyReference,
        InfoConfiguration::OriginOnly,
        InfoConfiguration::InternalOnly,
        InfoConfiguration::IntuitionOnly,
        InfoConfiguration::OriginInternal,
        InfoConfiguration::OriginIntuition,
        InfoConfiguration::InternalIntuition,
        InfoConfiguration::Complete,
        InfoConfiguration::ChineseTranslation,
    ];

    /// Display label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            InfoConfiguration::NoContext => "No Context",
            InfoConfiguration::QualifiedName => "Qualified Name",
            InfoConfiguration::EmptyReference => "Empty Reference",
            InfoConfiguration::OriginOnly => "Origin Only",
            InfoConfiguration::InternalOnly => "Internal Only",
            InfoConfiguration::IntuitionOnly => "Intuition Only",
            InfoConfiguration::OriginInternal => "Origin + Internal",
            InfoConfiguration::OriginIntuition => "Origin + Intuition",
            InfoConfiguration::InternalIntuition => "Internal + Intuition",
            InfoConfiguration::Complete => "Complete Information",
            InfoConfiguration::ChineseTranslation => "Chinese Translation",
        }
    }

    /// Kebab-case name accepted on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            InfoConfiguration::NoContext => "no-context",
            InfoConfiguration::QualifiedName => "qualified-name",
            InfoConfiguration::EmptyReference => "empty-reference",
            InfoConfiguration::OriginOnly => "origin-only",
            InfoConfiguration::InternalOnly => "internal-only",
            InfoConfiguration::IntuitionOnly => "intuition-only",
            InfoConfiguration::OriginInternal => "origin-internal",
            InfoConfiguration::OriginIntuition => "origin-intuition",
            InfoConfiguration::InternalIntuition => "internal-intuition",
            InfoConfiguration::Complete => "complete",
            InfoConfiguration::ChineseTranslation => "chinese-translation",
        }
    }

    pub fn inclusion(self) -> Inclusion {
        use InfoConfiguration::*;
        let (origin, internal, intuition) = match self {
            NoContext | QualifiedName | EmptyReference => (false, false, false),
            OriginOnly => (true, false, false),
            InternalOnly => (false, true, false),
            IntuitionOnly => (false, false, true),
            OriginInternal => (true, true, false),
            OriginIntuition => (true, false, true),
            InternalIntuition => (false, true, true),
            Complete | ChineseTranslation => (true, true, true),
        };
        let structured = !matches!(self, NoContext | QualifiedName);
        Inclusion {
            qualified_names: self != NoContext,
            glob_def: structured,
            origin,
            internal,
            intuition,
            techniques: structured,
            translated: self == ChineseTranslation,
        }
    }
}

impl fmt::Display for InfoConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for InfoConfiguration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        InfoConfiguration::ALL
            .into_iter()
            .find(|c| c.slug() == wanted || format!("{c:?}").to_ascii_lowercase() == wanted.replace('-', ""))
            .ok_or_else(|| {
                let names: Vec<&str> = InfoConfiguration::ALL.iter().map(|c| c.slug()).collect();
                format!("unknown configuration {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inclusion {
    pub qualified_names: bool,
    pub glob_def: bool,
    pub origin: bool,
    pub internal: bool,
    pub intuition: bool,
    pub techniques: bool,
    pub translated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    ProofState,
    ShortNames,
    QualifiedNames,
    GlobDef,
    Origin,
    Internal,
    Intuition,
    Translated,
    Trace,
    Premises,
    Tactics,
    Notes,
    Hint,
    Actions,
}

impl Inclusion {
    pub fn sections(&self) -> BTreeSet<Section> {
        let mut s = BTreeSet::from([Section::ProofState, Section::Actions]);
        s.insert(if self.qualified_names { Section::QualifiedNames } else { Section::ShortNames });
        let flags = [
            (self.glob_def, Section::GlobDef),
            (self.origin, Section::Origin),
            (self.internal, Section::Internal),
            (self.intuition, Section::Intuition),
            (self.translated, Section::Translated),
        ];
        s.extend(flags.into_iter().filter(|(on, _)| *on).map(|(_, sec)| sec));
        if self.techniques {
            s.extend([Section::Trace, Section::Premises, Section::Tactics, Section::Notes, Section::Hint]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub rendered: String,
    pub sections_present: BTreeSet<Section>,
    pub config: InfoConfiguration,
    pub concept_tokens: Vec<TokenId>,
    /// Concept names as they appear in the rendered text, parallel to `concept_tokens`.
    pub concept_names: Vec<String>,
}

/// Everything the proving prompt is filled from.
#[derive(Debug, Clone)]
pub struct ProveInputs<'a> {
    pub state: &'a ProofState,
    pub concepts: Vec<(TokenId, &'a EntityRecord)>,
    pub trace: &'a [TraceEntry],
    pub summary: &'a str,
    pub premises: Vec<String>,
    pub tactics: Vec<String>,
    pub notes: &'a [String],
    pub hint: &'a str,
}

impl<'a> ProveInputs<'a> {
    pub fn new(state: &'a ProofState) -> Self {
        ProveInputs {
            state,
            concepts: Vec::new(),
            trace: &[],
            summary: "",
            premises: Vec::new(),
            tactics: Vec::new(),
            notes: &[],
            hint: "",
        }
    }
}

fn hyps_text(goal: &GoalState, qualified: bool) -> String {
    let hyps = if qualified { &goal.hypotheses_internal } else { &goal.hypotheses_surface };
    hyps.iter().map(|h| format!("{} : {}", h.name, h.ty)).collect::<Vec<_>>().join("\n")
}

fn goal_text(state: &ProofState, qualified: bool) -> String {
    let pick = |g: &GoalState| if qualified { g.goal_internal.clone() } else { g.goal_surface.clone() };
    let mut goals = state.goals.iter();
    let Some(first) = goals.next() else {
        return "No more goals.".into();
    };
    let mut out = pick(first);
    let rest: Vec<String> = goals.map(pick).collect();
    if !rest.is_empty() {
        out.push_str(&format!("\n\n# Remaining goals ({}):", rest.len()));
        for g in rest {
            out.push('\n');
            out.push_str(&g);
        }
    }
    out
}

/// Hypotheses and goal of the focused goal, for the auxiliary prompts.
pub fn state_text(state: &ProofState, qualified: bool) -> String {
    match state.focused() {
        None => "No more goals.".into(),
        Some(goal) => {
            format!("# Hypotheses:\n{}\n\n# Goal:\n{}", hyps_text(goal, qualified), goal_text(state, qualified))
        }
    }
}

pub fn tactic_sequence<'t>(tactics: impl IntoIterator<Item = &'t str>) -> String {
    tactics
        .into_iter()
        .map(|t| {
            let t = t.trim();
            if t.ends_with('.') {
                t.to_string()
            } else {
                format!("{t}.")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn trace_summary(trace: &[TraceEntry], summary: &str) -> String {
    let mut lines: Vec<String> = trace
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.explanation.trim().is_empty())
        .map(|(i, e)| format!("Step {} ({}): {}", i + 1, e.tactic, e.explanation.trim()))
        .collect();
    if !summary.trim().is_empty() {
        lines.push(format!("Summary: {}", summary.trim()));
    }
    lines.join("\n")
}

fn bullet_list(items: &[String]) -> String {
    items.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n")
}

/// Stable order: first occurrence in the internal goal, then in the
/// hypotheses; concepts not found keep their input order at the end.
pub fn order_concepts<'a>(
    state: &ProofState,
    concepts: &[(TokenId, &'a EntityRecord)],
) -> Vec<(TokenId, &'a EntityRecord)> {
    let mut haystack = String::new();
    for g in &state.goals {
        haystack.push_str(&g.goal_internal);
        haystack.push('\n');
    }
    for g in &state.goals {
        for h in &g.hypotheses_internal {
            haystack.push_str(&h.ty);
            haystack.push('\n');
        }
    }
    let position = |r: &EntityRecord| -> usize {
        [r.name.as_str(), r.kernel_name.as_str()]
            .iter()
            .filter_map(|n| find_word(&haystack, n))
            .min()
            .unwrap_or(usize::MAX)
    };
    let mut keyed: Vec<(usize, usize, (TokenId, &EntityRecord))> =
        concepts.iter().enumerate().map(|(i, c)| (position(c.1), i, *c)).collect();
    keyed.sort_by_key(|(pos, i, _)| (*pos, *i));
    keyed.into_iter().map(|(_, _, c)| c).collect()
}

/// Byte offset of `word` in `text` not embedded in a longer identifier.
fn find_word(text: &str, word: &str) -> Option<usize> {
    if word.is_empty() {
        return None;
    }
    let is_ident = |c: char| c.is_alphanumeric() || c == '_' || c == '\'' || c == '.';
    let mut from = 0;
    while let Some(off) = text[from..].find(word) {
        let start = from + off;
        let end = start + word.len();
        let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_ident(c));
        let after_ok = text[end..].chars().next().is_none_or(|c| !is_ident(c));
        if before_ok && after_ok {
            return Some(start);
        }
        from = start + word.chars().next().map_or(1, char::len_utf8);
    }
    None
}

fn pick<'r>(translated: bool, zh: &'r Option<String>, original: &'r str) -> &'r str {
    match zh {
        Some(t) if translated && !t.trim().is_empty() => t,
        _ => original,
    }
}

/// One glob-def block for `record` under `inc`.
pub fn render_concept(record: &EntityRecord, inc: &Inclusion) -> String {
    let mut out = record.name.clone();
    if inc.origin {
        out.push_str("\nOrigin:\n");
        out.push_str(pick(inc.translated, &record.origin_zh, &record.origin).trim_end());
    }
    if inc.internal {
        out.push_str("\nInternal:\n");
        out.push_str(pick(inc.translated, &record.internal_zh, &record.internal).trim_end());
    }
    if inc.intuition {
        let intuition = record.intuition.as_deref().unwrap_or("");
        let text = pick(inc.translated, &record.intuition_zh, intuition).trim_end();
        if !text.is_empty() {
            out.push_str("\nIntuition:\n");
            out.push_str(text);
        }
    }
    out
}

fn glob_def_text(concepts: &[(TokenId, &EntityRecord)], inc: &Inclusion) -> String {
    if !(inc.origin || inc.internal || inc.intuition) {
        return String::new();
    }
    let mut out = String::new();
    for (_, record) in concepts {
        out.push_str(&render_concept(record, inc));
        out.push_str("\n\n");
    }
    out.truncate(out.trim_end().len());
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

pub fn render_prove_prompt(inputs: &ProveInputs<'_>, config: InfoConfiguration) -> PromptBundle {
    let inc = config.inclusion();
    let concepts = order_concepts(inputs.state, &inputs.concepts);
    let hyps = inputs.state.focused().map(|g| hyps_text(g, inc.qualified_names)).unwrap_or_default();
    let goal = goal_text(inputs.state, inc.qualified_names);
    let glob_def = glob_def_text(&concepts, &inc);
    let tactic_seq = tactic_sequence(inputs.trace.iter().map(|e| e.tactic.as_str()));
    let proof_summary = trace_summary(inputs.trace, inputs.summary);
    let premises = bullet_list(&inputs.premises);
    let tactics = bullet_list(&inputs.tactics);
    let public_notes = bullet_list(inputs.notes);

    let template = if inc.glob_def {
        PROVE.to_string()
    } else {
        let head = &PROVE[..PROVE.find(markers::GLOB_DEF).expect("template has glob-def block")];
        let tail = &PROVE[PROVE.find(markers::PROVE).expect("template has actions block")..];
        format!("{head}{tail}")
    };
    let rendered = fill(
        &template,
        &[
            ("hyps", &hyps),
            ("goal", &goal),
            ("glob_def", &glob_def),
            ("tactic_seq", &tactic_seq),
            ("proof_summary", &proof_summary),
            ("premises", &premises),
            ("tactics", &tactics),
            ("public_notes", &public_notes),
            ("hint", inputs.hint),
        ],
    );
    let concept_names = concepts
        .iter()
        .map(|(_, r)| if inc.qualified_names { r.name.clone() } else { short_name(&r.name).to_string() })
        .collect();
    PromptBundle {
        rendered,
        sections_present: inc.sections(),
        config,
        concept_tokens: concepts.iter().map(|(id, _)| *id).collect(),
        concept_names,
    }
}

/// A rejected tactic with the compiler's message, fed back to the Planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedTactic {
    pub tactic: String,
    pub error: String,
}

pub fn render_planner_prompt(inputs: &ProveInputs<'_>, config: InfoConfiguration, failures: &[FailedTactic]) -> String {
    let inc = config.inclusion();
    let concepts = order_concepts(inputs.state, &inputs.concepts);
    let inc_for_defs = if inc.glob_def { inc } else { InfoConfiguration::EmptyReference.inclusion() };
    let errors = if failures.is_empty() {
        String::new()
    } else {
        let list = failures.iter().map(|f| format!("- `{}`: {}", f.tactic, f.error)).collect::<Vec<_>>().join("\n");
        format!("{}\n", fill(ERRORS, &[("errors", &list)]))
    };
    fill(
        PLANNER,
        &[
            ("hyps", &inputs.state.focused().map(|g| hyps_text(g, inc.qualified_names)).unwrap_or_default()),
            ("goal", &goal_text(inputs.state, inc.qualified_names)),
            ("glob_def", &glob_def_text(&concepts, &inc_for_defs)),
            ("tactic_seq", &tactic_sequence(inputs.trace.iter().map(|e| e.tactic.as_str()))),
            ("proof_summary", &trace_summary(inputs.trace, inputs.summary)),
            ("public_notes", &bullet_list(inputs.notes)),
            ("errors", &errors),
        ],
    )
}

pub fn render_explanation_prompt(before: &ProofState, tactic: &str, after: &ProofState) -> String {
    fill(EXPLAIN, &[("tactic", tactic), ("before", &state_text(before, false)), ("after", &state_text(after, false))])
}

pub fn render_summary_prompt(initial: &ProofState, trace: &[TraceEntry], current: &ProofState) -> String {
    let explanations = trace_summary(trace, "");
    fill(
        SUMMARY,
        &[
            ("initial", &goal_text(initial, false)),
            ("tactic_seq", &tactic_sequence(trace.iter().map(|e| e.tactic.as_str()))),
            ("explanations", &explanations),
            ("state", &state_text(current, false)),
        ],
    )
}

pub fn render_notes_prompt(initial: &ProofState, notes: &[String], insights: &[String], capacity: usize) -> String {
    fill(
        NOTES,
        &[
            ("capacity", &capacity.to_string()),
            ("initial", &goal_text(initial, false)),
            ("notes", &bullet_list(notes)),
            ("insights", &bullet_list(insights)),
        ],
    )
}

/// One candidate in a ranking prompt.
#[derive(Debug, Clone)]
pub struct RankEntry<'a> {
    pub id: usize,
    pub state: &'a ProofState,
    pub trace: &'a [TraceEntry],
    pub summary: &'a str,
}

pub fn render_rank_prompt(initial: &ProofState, candidates: &[RankEntry<'_>]) -> String {
    let blocks: Vec<String> = candidates
        .iter()
        .map(|c| {
            format!(
                "Candidate {} (goals remaining: {})\nTactics: {}\nSummary: {}\n{}",
                c.id,
                c.state.goals.len(),
                tactic_sequence(c.trace.iter().map(|e| e.tactic.as_str())),
                c.summary.trim(),
                state_text(c.state, false)
            )
        })
        .collect();
    fill(RANK, &[("initial", &goal_text(initial, false)), ("candidates", &blocks.join("\n\n"))])
}

/// Follow-up turn answering an info request from the corpus.
pub fn render_info_prompt(answers: &[(String, Option<&EntityRecord>)]) -> String {
    let full = InfoConfiguration::Complete.inclusion();
    let text: Vec<String> = answers
        .iter()
        .map(|(name, record)| match record {
            Some(r) => render_concept(r, &full),
            None => format!("{name}\nNo entry for this name in the corpus."),
        })
        .collect();
    fill(INFO, &[("answers", &text.join("\n\n"))])
}

/// Clarity probe: the structured context (without the action instructions)
/// followed by the definition request.
pub fn render_clarity_probe(bundle: &PromptBundle, concept_name: &str) -> String {
    let context = bundle.rendered.split(markers::PROVE).next().unwrap_or("").trim_end();
    fill(PROBE, &[("context", context), ("concept", concept_name)])
}

pub fn render_clarity_judge(concept_name: &str, generated_definition: &str, reference: &EntityRecord) -> String {
    let reference_text =
        format!("Origin:\n{}\nInternal:\n{}", reference.origin.trim_end(), reference.internal.trim_end());
    fill(
        JUDGE,
        &[("concept", concept_name), ("generated", generated_definition.trim()), ("reference", &reference_text)],
    )
}
