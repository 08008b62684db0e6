//! Replay model for tests and offline runs.
//!
//! A script is an ordered list of entries. Each call consumes the first unused
//! entry that matches the prompt: `prompt_digest` (if set) must equal the
//! sha256 of the last user message, and every `contains` fragment must occur
//! in it. Entries with `repeat` are never consumed. With no filters the script
//! is a plain queue.
//!
//! Replay files hold one JSON entry per line; blank lines and lines starting
//! with `#` are skipped:
//!
//! ```text
//! {"contains": ["=== Available Actions ==="], "reply": "{\"tactics\": [...]}"}
//! {"logprobs": {"yes": -0.1, "no": -2.3}}
//! ```

use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_digest, ChatModel, ChatRequest, Completion, GatewayError, TokenLogprob};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedLogprobs {
    pub yes: Option<f64>,
    pub no: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptEntry {
    pub prompt_digest: Option<String>,
    pub contains: Vec<String>,
    pub reply: String,
    pub logprobs: Option<ScriptedLogprobs>,
    pub repeat: bool,
}

impl ScriptEntry {
    pub fn reply(text: impl Into<String>) -> Self {
        ScriptEntry { reply: text.into(), ..Default::default() }
    }

    pub fn judge(yes: Option<f64>, no: Option<f64>) -> Self {
        ScriptEntry { logprobs: Some(ScriptedLogprobs { yes, no }), ..Default::default() }
    }

    pub fn when(mut self, fragment: impl Into<String>) -> Self {
        self.contains.push(fragment.into());
        self
    }

    pub fn for_prompt(mut self, prompt: &str) -> Self {
        self.prompt_digest = Some(prompt_digest(prompt));
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    fn matches(&self, prompt: &str, digest: &str) -> bool {
        self.prompt_digest.as_deref().is_none_or(|d| d == digest)
            && self.contains.iter().all(|frag| prompt.contains(frag.as_str()))
    }

    fn completion(&self) -> Completion {
        let Some(lp) = &self.logprobs else {
            return Completion::text(self.reply.clone());
        };
        let mut top = Vec::new();
        if let Some(y) = lp.yes {
            top.push(("YES".to_string(), y));
        }
        if let Some(n) = lp.no {
            top.push(("NO".to_string(), n));
        }
        top.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (token, logprob) = top
            .first()
            .cloned()
            .unwrap_or_else(|| (if self.reply.is_empty() { "UNSURE".into() } else { self.reply.clone() }, 0.0));
        let text = if self.reply.is_empty() { token.clone() } else { self.reply.clone() };
        Completion { text, logprobs: Some(vec![TokenLogprob { token, logprob, top }]) }
    }
}

#[derive(Debug)]
pub struct ScriptedModel {
    name: String,
    entries: Mutex<Vec<(ScriptEntry, bool)>>,
}

impl ScriptedModel {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedModel {
            name: "scripted".into(),
            entries: Mutex::new(entries.into_iter().map(|e| (e, false)).collect()),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(trimmed).map_err(|e| format!("script line {}: {e}", i + 1))?;
            entries.push(entry);
        }
        Ok(ScriptedModel::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self::parse(std::io::BufReader::new(file))?.named(path.display().to_string()))
    }

    /// Entries not yet consumed (repeating entries excluded).
    pub fn remaining(&self) -> usize {
        self.entries.lock().expect("script poisoned").iter().filter(|(e, used)| !used && !e.repeat).count()
    }
}

impl ChatModel for ScriptedModel {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let prompt = request.last_user();
        let digest = prompt_digest(prompt);
        let mut entries = self.entries.lock().expect("script poisoned");
        let slot = entries
            .iter_mut()
            .find(|(e, used)| !*used && e.matches(prompt, &digest))
            .ok_or_else(|| GatewayError::Provider(format!("script exhausted (prompt digest {digest})")))?;
        if !slot.0.repeat {
            slot.1 = true;
        }
        Ok(slot.0.completion())
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(m: &ScriptedModel, prompt: &str) -> Result<String, GatewayError> {
        m.complete(&ChatRequest::prompt(prompt, 0.0)).map(|c| c.text)
    }

    #[test]
    fn queue_then_exhausted() {
        let m = ScriptedModel::new(vec![ScriptEntry::reply("ok")]);
        assert_eq!(ask(&m, "anything").unwrap(), "ok");
        assert!(matches!(ask(&m, "anything"), Err(GatewayError::Provider(_))));
    }

    #[test]
    fn filters_and_repeat() {
        let m = ScriptedModel::new(vec![
            ScriptEntry::reply("plan").when("PLAN"),
            ScriptEntry::reply("exact").for_prompt("EXACT"),
            ScriptEntry::reply("fallback").repeating(),
        ]);
        assert_eq!(ask(&m, "EXACT").unwrap(), "exact");
        assert_eq!(ask(&m, "x PLAN y").unwrap(), "plan");
        assert_eq!(ask(&m, "x PLAN y").unwrap(), "fallback");
        assert_eq!(ask(&m, "EXACT").unwrap(), "fallback");
        assert_eq!(m.remaining(), 0);
    }

    #[test]
    fn replay_file() {
        let text = "# comment\n{\"reply\": \"a\"}\n\n{\"logprobs\": {\"yes\": -0.1, \"no\": null}}\n";
        let m = ScriptedModel::parse(text.as_bytes()).unwrap();
        assert_eq!(m.remaining(), 2);
        assert_eq!(ask(&m, "p").unwrap(), "a");
        let c = m.complete(&ChatRequest::prompt("p", 0.0)).unwrap();
        assert_eq!(c.text, "YES");
        assert_eq!(c.logprobs.unwrap()[0].top, vec![("YES".to_string(), -0.1)]);
    }

    #[test]
    fn bad_replay_line_is_reported() {
        let err = ScriptedModel::parse("{\"reply\": 3}".as_bytes()).unwrap_err();
        assert!(err.contains("line 1"), "{err}");
    }
}
