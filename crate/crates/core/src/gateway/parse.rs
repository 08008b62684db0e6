//! Lenient extraction of the Executor's structured reply.
//!
//! Models wrap the object in prose or code fences, leave keys unquoted
//! (`{ tactics: [...] }`) and add trailing commas. Each `{` in the reply is tried
//! as the start of a balanced object; the first one carrying an `info` or
//! `tactics` list wins.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MAX_SUGGESTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticSuggestion {
    pub tactic: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionResponse {
    InfoRequest(Vec<String>),
    /// `dropped` counts suggestions cut by the 10-item cap.
    TacticSuggestions {
        items: Vec<TacticSuggestion>,
        dropped: usize,
    },
    Unparsed(String),
}

pub fn parse_action_response(raw: &str) -> ActionResponse {
    json_objects(raw).find_map(|v| interpret(&v)).unwrap_or_else(|| ActionResponse::Unparsed(raw.to_string()))
}

/// Every balanced `{...}` in `raw` that parses as JSON after light repair, in
/// order of its opening brace.
pub fn json_objects(raw: &str) -> impl Iterator<Item = Value> + '_ {
    raw.char_indices().filter(|(_, c)| *c == '{').filter_map(|(start, _)| {
        let end = balanced_end(&raw[start..])?;
        serde_json::from_str::<Value>(&repair(&raw[start..start + end])).ok()
    })
}

fn interpret(value: &Value) -> Option<ActionResponse> {
    let obj = value.as_object()?;
    if let Some(Value::Array(items)) = obj.get("info") {
        let names: Vec<String> =
            items.iter().filter_map(|v| v.as_str()).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if !names.is_empty() {
            return Some(ActionResponse::InfoRequest(names));
        }
    }
    if let Some(Value::Array(items)) = obj.get("tactics") {
        let mut out: Vec<TacticSuggestion> = items
            .iter()
            .filter_map(|v| match v {
                Value::Object(o) => Some(TacticSuggestion {
                    tactic: o.get("tactic")?.as_str()?.trim().to_string(),
                    reason: o.get("reason").and_then(Value::as_str).unwrap_or("").trim().to_string(),
                }),
                Value::String(s) => Some(TacticSuggestion { tactic: s.trim().to_string(), reason: String::new() }),
                _ => None,
            })
            .filter(|t| !t.tactic.is_empty())
            .collect();
        if out.is_empty() {
            return None;
        }
        let dropped = out.len().saturating_sub(MAX_SUGGESTIONS);
        if dropped > 0 {
            log::warn!("executor suggested {} tactics; keeping the first {MAX_SUGGESTIONS}", out.len());
            out.truncate(MAX_SUGGESTIONS);
        }
        return Some(ActionResponse::TacticSuggestions { items: out, dropped });
    }
    None
}

/// Byte length of the balanced `{...}` at the start of `s`, honouring strings.
fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return (c == '}').then_some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Quote bare keys and drop trailing commas, outside string literals only.
fn repair(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len() + 16);
    let mut in_str = false;
    let mut escaped = false;
    // last significant non-whitespace char emitted outside strings
    let mut last_sig = ' ';
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if in_str {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => {
                    in_str = false;
                    last_sig = '"';
                }
                _ => {}
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(c);
                    last_sig = c;
                }
            }
            c if (c.is_alphabetic() || c == '_') && matches!(last_sig, '{' | ',') => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let after = chars[i..].iter().find(|c| !c.is_whitespace());
                if after == Some(&':') {
                    out.push('"');
                    out.push_str(&word);
                    out.push('"');
                } else {
                    out.push_str(&word);
                }
                last_sig = 'w';
                continue;
            }
            c => {
                out.push(c);
                if !c.is_whitespace() {
                    last_sig = c;
                }
            }
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tactics(r: ActionResponse) -> Vec<String> {
        match r {
            ActionResponse::TacticSuggestions { items, .. } => items.into_iter().map(|t| t.tactic).collect(),
            other => panic!("expected suggestions, got {other:?}"),
        }
    }

    #[test]
    fn info_request() {
        assert_eq!(
            parse_action_response(r#"{"info": ["FixFun", "intros"]}"#),
            ActionResponse::InfoRequest(vec!["FixFun".into(), "intros".into()])
        );
    }

    #[test]
    fn fenced_two_item_list() {
        let raw = "Let me think.\n```json\n{\"tactics\": [\n  {\"tactic\": \"intros n\", \"reason\": \"introduce n\"},\n  {\"tactic\": \"simpl\", \"reason\": \"reduce 0 + n\"}\n]}\n```\nGood luck.";
        let parsed = parse_action_response(raw);
        assert_eq!(
            parsed,
            ActionResponse::TacticSuggestions {
                items: vec![
                    TacticSuggestion { tactic: "intros n".into(), reason: "introduce n".into() },
                    TacticSuggestion { tactic: "simpl".into(), reason: "reduce 0 + n".into() },
                ],
                dropped: 0
            }
        );
    }

    #[test]
    fn unquoted_key_as_in_the_prompt_schema() {
        let raw = r#"{ tactics: [ {"tactic": "reflexivity", "reason": "both sides match, trivially: yes"}, ] }"#;
        assert_eq!(tactics(parse_action_response(raw)), vec!["reflexivity"]);
    }

    #[test]
    fn prose_only() {
        let raw = "I would try induction on n.";
        assert_eq!(parse_action_response(raw), ActionResponse::Unparsed(raw.into()));
    }

    #[test]
    fn clamps_to_ten() {
        let items: Vec<String> = (0..13).map(|i| format!(r#"{{"tactic":"t{i}","reason":"r"}}"#)).collect();
        let raw = format!(r#"{{"tactics":[{}]}}"#, items.join(","));
        match parse_action_response(&raw) {
            ActionResponse::TacticSuggestions { items, dropped } => {
                assert_eq!(items.len(), 10);
                assert_eq!(dropped, 3);
                assert_eq!(items[9].tactic, "t9");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_tactics_list_is_unparsed() {
        assert!(matches!(parse_action_response(r#"{"tactics": []}"#), ActionResponse::Unparsed(_)));
    }

    #[test]
    fn braces_inside_strings() {
        let raw = r#"{"tactics": [{"tactic": "exists {x}", "reason": "close } early"}]}"#;
        assert_eq!(tactics(parse_action_response(raw)), vec!["exists {x}"]);
    }

    #[test]
    fn skips_unrelated_objects() {
        let raw = r#"Context {"a": 1} then {"tactics": [{"tactic": "auto", "reason": ""}]}"#;
        assert_eq!(tactics(parse_action_response(raw)), vec!["auto"]);
    }

    proptest! {
        #[test]
        fn total_over_arbitrary_text(s in "\\PC{0,200}") {
            let _ = parse_action_response(&s);
        }

        #[test]
        fn total_over_brace_soup(s in "[{}\\[\\]\",:a-z ]{0,80}") {
            let _ = parse_action_response(&s);
        }

        #[test]
        fn suggestions_never_exceed_cap(n in 1usize..30) {
            let items: Vec<String> = (0..n).map(|i| format!(r#"{{"tactic":"t{i}","reason":"r"}}"#)).collect();
            let raw = format!(r#"{{"tactics":[{}]}}"#, items.join(","));
            match parse_action_response(&raw) {
                ActionResponse::TacticSuggestions { items, dropped } => {
                    prop_assert!(!items.is_empty() && items.len() <= MAX_SUGGESTIONS);
                    prop_assert_eq!(items.len() + dropped, n);
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
