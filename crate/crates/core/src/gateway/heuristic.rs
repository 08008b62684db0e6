//! Deterministic offline stand-in for a chat model.
//!
//! It recognises each prompt kind by its marker line and answers with simple
//! rules: generic tactic suggestions driven by the goal's shape and the
//! hypothesis names, the visible definition text for clarity probes, and
//! token-overlap log-probabilities for the judge. Useful for demos and
//! end-to-end runs without network access; not a substitute for a real model.

use std::collections::BTreeSet;

use super::{ChatModel, ChatRequest, Completion, GatewayError, TokenLogprob};
use crate::prompt::markers;

#[derive(Debug, Clone, Default)]
pub struct HeuristicModel;

impl HeuristicModel {
    pub fn new() -> Self {
        HeuristicModel
    }
}

/// Text between `start` (exclusive) and the next blank-line-delimited header.
fn block_after<'a>(text: &'a str, start: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    let end = ["\n\n#", "\n\n===", "\n\nGlobal definitions", "\nGlobal definitions"]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    Some(rest[..end].trim_matches('\n'))
}

fn suggest(prompt: &str) -> String {
    let hyps: Vec<(String, String)> = block_after(prompt, "# Hypotheses:\n")
        .unwrap_or("")
        .lines()
        .filter_map(|l| l.split_once(" : "))
        .map(|(n, t)| (n.trim().to_string(), t.trim().to_string()))
        .collect();
    let goal = block_after(prompt, "# Goal:\n").unwrap_or("").lines().next().unwrap_or("").to_string();
    let premises: Vec<String> = block_after(prompt, "Potentially relevant premises (for reference only):\n")
        .unwrap_or("")
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .map(|l| l.split(" : ").next().unwrap_or(l).trim().to_string())
        .collect();

    let mut out: Vec<String> = Vec::new();
    if goal.starts_with("forall") || goal.contains("->") {
        out.push("intros".into());
    }
    out.push("reflexivity".into());
    out.push("simpl".into());
    if goal.contains("/\\") || goal.contains("Coq.Init.Logic.and") {
        out.push("split".into());
    }
    if goal.contains("\\/") || goal.contains("Coq.Init.Logic.or") {
        out.push("left".into());
        out.push("right".into());
    }
    if !hyps.is_empty() {
        out.push("assumption".into());
    }
    for (name, ty) in &hyps {
        if ty.contains('=') || ty.contains("Logic.eq") {
            out.push(format!("rewrite {name}"));
        }
    }
    for (name, ty) in &hyps {
        if ty == "nat" {
            out.push(format!("induction {name}"));
        }
    }
    for (name, ty) in &hyps {
        if ty.contains('=') || ty.contains("Logic.eq") {
            out.push(format!("rewrite <- {name}"));
        }
        if ty != "nat" && ty != "Prop" && ty != "Type" && ty != "Set" {
            out.push(format!("apply {name}"));
        }
    }
    for p in premises {
        out.push(format!("rewrite {p}"));
        out.push(format!("apply {p}"));
    }
    out.push("trivial".into());
    let mut seen = BTreeSet::new();
    out.retain(|t| seen.insert(t.clone()));
    out.truncate(10);
    let items: Vec<serde_json::Value> =
        out.into_iter().map(|t| serde_json::json!({"tactic": t, "reason": "matches the shape of the goal"})).collect();
    serde_json::json!({ "tactics": items }).to_string()
}

fn merge_notes(prompt: &str) -> String {
    let capacity: usize = prompt
        .split("holding at most ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(15);
    let items = |header: &str| -> Vec<String> {
        block_after(prompt, header)
            .unwrap_or("")
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .map(str::to_string)
            .collect()
    };
    let mut merged = items("New insights:\n");
    merged.extend(items("Current notes:\n"));
    let mut seen = BTreeSet::new();
    merged.retain(|n| seen.insert(n.clone()));
    merged.truncate(capacity);
    serde_json::json!({ "notes": merged }).to_string()
}

fn rank(prompt: &str) -> String {
    let re = regex::Regex::new(r"Candidate (\d+) \(goals remaining: (\d+)\)").expect("static regex");
    let mut cands: Vec<(usize, usize)> =
        re.captures_iter(prompt).filter_map(|c| Some((c[1].parse().ok()?, c[2].parse().ok()?))).collect();
    cands.sort_by_key(|&(id, goals)| (goals, id));
    serde_json::json!({ "ranking": cands.iter().map(|c| c.0).collect::<Vec<_>>() }).to_string()
}

/// The block for `concept` in a probe context, with its heading removed.
fn probe_answer(prompt: &str) -> String {
    let concept = prompt.rsplit(markers::PROBE).next().unwrap_or("").trim().trim_end_matches('.').to_string();
    let heading = format!("\n{concept}\n");
    let Some(pos) = prompt.find(&heading) else {
        return format!("Definition {concept} := (* unknown *).");
    };
    let block = &prompt[pos + heading.len()..];
    let end = block.find("\n\n").unwrap_or(block.len());
    let block = &block[..end];
    for label in ["Origin:\n", "Internal:\n"] {
        if let Some(body) = block.split(label).nth(1) {
            let body = body.split("\nInternal:\n").next().unwrap_or(body);
            let body = body.split("\nIntuition:\n").next().unwrap_or(body);
            return body.trim().to_string();
        }
    }
    format!("Definition {concept} := (* {} *).", block.trim())
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
        .filter(|w| !w.is_empty())
        .map(|w| w.rsplit('.').next().unwrap_or(w).to_lowercase())
        .collect()
}

/// Jaccard overlap of candidate and reference words, as YES probability.
fn judge(prompt: &str) -> Completion {
    let body = prompt.split_once("?\n\n").map(|x| x.1).unwrap_or("");
    let (generated, reference) = body.split_once(markers::JUDGE_REFERENCE).unwrap_or((body, ""));
    let reference = reference.trim_end().trim_end_matches(markers::JUDGE);
    let (g, r) = (words(generated), words(reference));
    let union = g.union(&r).count();
    let overlap = if union == 0 { 0.0 } else { g.intersection(&r).count() as f64 / union as f64 };
    let p = overlap.clamp(0.01, 0.99);
    let (yes, no) = (p.ln(), (1.0 - p).ln());
    let top = vec![("YES".to_string(), yes), ("NO".to_string(), no)];
    let (token, logprob) = if yes >= no { ("YES", yes) } else { ("NO", no) };
    Completion { text: token.into(), logprobs: Some(vec![TokenLogprob { token: token.into(), logprob, top }]) }
}

impl ChatModel for HeuristicModel {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let prompt = request.last_user();
        if prompt.contains(markers::JUDGE) {
            return Ok(judge(prompt));
        }
        let text = if prompt.contains(markers::PROBE) {
            probe_answer(prompt)
        } else if prompt.contains(markers::PLANNER) {
            "Concepts: the goal's head symbol.\nApplicable theorems: none identified.\nTechniques: introduce, simplify, rewrite.\nHypothesis-goal relationships: hypotheses may rewrite the goal.\nStrategy: introduce variables, simplify, then close by reflexivity or induction.".into()
        } else if prompt.contains(markers::EXPLAIN) {
            let tactic = prompt.split("Tactic: ").nth(1).and_then(|s| s.lines().next()).unwrap_or("");
            format!("`{tactic}` transformed the goal as shown. In plain terms, it moves the proof one step closer to a form that closes directly.")
        } else if prompt.contains(markers::SUMMARY) {
            let remaining = block_after(prompt, "Current state:\n").map_or(0, |s| s.matches("# Goal:").count());
            let score = if remaining == 0 { 1.0 } else { 0.5 };
            format!("Progress recorded.\nScore: {score}")
        } else if prompt.contains(markers::NOTES) {
            merge_notes(prompt)
        } else if prompt.contains(markers::RANK) {
            rank(prompt)
        } else if prompt.contains(markers::PROVE) || prompt.contains(markers::INFO) {
            suggest(prompt)
        } else {
            "I do not recognise this request.".into()
        };
        Ok(Completion::text(text))
    }

    fn name(&self) -> &str {
        "heuristic"
    }
}
