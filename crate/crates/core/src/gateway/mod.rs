//! Chat-model access for the Planner, Executor and judge roles.
//!
//! Every model sits behind [`ChatModel`]. [`Gateway`] adds role temperatures,
//! retries, a concurrency cap and YES/NO log-probability extraction.

mod heuristic;
mod http;
mod parse;
mod scripted;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use heuristic::HeuristicModel;
pub use http::{HttpChatConfig, HttpChatModel};
pub use parse::{json_objects, parse_action_response, ActionResponse, TacticSuggestion, MAX_SUGGESTIONS};
pub use scripted::{ScriptEntry, ScriptedLogprobs, ScriptedModel};

pub const DEFAULT_LOGPROB_FLOOR: f64 = -20.0;
pub const DEFAULT_API_KEY_ENV: &str = "PROOFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("neither YES nor NO among the first token's alternatives: {0:?}")]
    Unjudgeable(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Timeout | GatewayError::RateLimited { .. } | GatewayError::Provider(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
}

impl ChatRequest {
    pub fn prompt(text: impl Into<String>, temperature: f64) -> Self {
        ChatRequest { messages: vec![ChatMessage::user(text)], temperature, max_tokens: 2048, want_logprobs: false }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::Usage("chat request has no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Usage(format!("temperature {} is negative", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Usage("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Content of the last user message, the text mocks match against.
    pub fn last_user(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
    }
}

/// Log-probability of one generated token plus its top alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub logprobs: Option<Vec<TokenLogprob>>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Completion { text: text.into(), logprobs: None }
    }
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError>;

    fn name(&self) -> &str;
}

/// Hex sha256 of a prompt, used to pin replay records to exact prompts.
pub fn prompt_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YesNoLogprobs {
    pub log_p_yes: f64,
    pub log_p_no: f64,
}

/// Uppercased token with surrounding whitespace and punctuation removed.
pub fn normalize_answer_token(token: &str) -> String {
    token.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_uppercase()
}

fn log_sum_exp(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max == f64::NEG_INFINITY {
        return None;
    }
    if values.len() == 1 {
        return Some(max);
    }
    Some(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// YES/NO log-probabilities from the first content token of a completion.
///
/// Spelling variants of the same answer (`Yes`, ` YES`) are pooled. A side
/// that is absent from the alternatives gets `floor`.
pub fn extract_yes_no(completion: &Completion, floor: f64) -> Result<YesNoLogprobs, GatewayError> {
    let tokens =
        completion.logprobs.as_ref().ok_or_else(|| GatewayError::Malformed("completion carries no logprobs".into()))?;
    let first = tokens
        .iter()
        .find(|t| !normalize_answer_token(&t.token).is_empty())
        .ok_or_else(|| GatewayError::Unjudgeable(completion.text.clone()))?;
    let mut candidates: Vec<(&str, f64)> = vec![(first.token.as_str(), first.logprob)];
    for (tok, lp) in &first.top {
        if !candidates.iter().any(|(t, _)| t == tok) {
            candidates.push((tok.as_str(), *lp));
        }
    }
    let pool = |answer: &str| -> Option<f64> {
        let lps: Vec<f64> =
            candidates.iter().filter(|(t, _)| normalize_answer_token(t) == answer).map(|(_, lp)| *lp).collect();
        log_sum_exp(&lps).map(|v| v.min(0.0))
    };
    match (pool("YES"), pool("NO")) {
        (None, None) => Err(GatewayError::Unjudgeable(first.token.clone())),
        (yes, no) => Ok(YesNoLogprobs { log_p_yes: yes.unwrap_or(floor), log_p_no: no.unwrap_or(floor) }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub planner_temperature: f64,
    pub executor_temperature: f64,
    pub judge_temperature: f64,
    pub max_tokens: u32,
    pub logprob_floor: f64,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    /// Concurrent requests across all roles.
    pub max_concurrent: usize,
    /// Minimum spacing between request starts; 0 disables.
    pub min_interval_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            planner_temperature: 0.7,
            executor_temperature: 0.7,
            judge_temperature: 0.0,
            max_tokens: 2048,
            logprob_floor: DEFAULT_LOGPROB_FLOOR,
            max_retries: 3,
            retry_base_delay_ms: 500,
            max_concurrent: 8,
            min_interval_ms: 0,
        }
    }
}

#[derive(Debug, Default)]
struct Limiter {
    state: Mutex<(usize, Option<Instant>)>,
    freed: Condvar,
}

impl Limiter {
    fn acquire(&self, cap: usize, min_interval: Duration) {
        let mut guard = self.state.lock().expect("limiter poisoned");
        while guard.0 >= cap.max(1) {
            guard = self.freed.wait(guard).expect("limiter poisoned");
        }
        guard.0 += 1;
        if !min_interval.is_zero() {
            let now = Instant::now();
            let start = match guard.1 {
                Some(last) if last + min_interval > now => last + min_interval,
                _ => now,
            };
            guard.1 = Some(start);
            drop(guard);
            std::thread::sleep(start.saturating_duration_since(now));
        }
    }

    fn release(&self) {
        let mut guard = self.state.lock().expect("limiter poisoned");
        guard.0 -= 1;
        self.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelRole {
    Planner,
    Executor,
    Judge,
}

/// The three model roles behind one retry and rate-limit policy.
#[derive(Clone)]
pub struct Gateway {
    planner: Arc<dyn ChatModel>,
    executor: Arc<dyn ChatModel>,
    judge: Arc<dyn ChatModel>,
    pub config: GatewayConfig,
    limiter: Arc<Limiter>,
    calls: Arc<AtomicUsize>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("planner", &self.planner.name())
            .field("executor", &self.executor.name())
            .field("judge", &self.judge.name())
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    pub fn new(planner: Arc<dyn ChatModel>, executor: Arc<dyn ChatModel>, judge: Arc<dyn ChatModel>) -> Self {
        Gateway {
            planner,
            executor,
            judge,
            config: GatewayConfig::default(),
            limiter: Arc::default(),
            calls: Arc::default(),
        }
    }

    /// One model in every role.
    pub fn single(model: Arc<dyn ChatModel>) -> Self {
        Gateway::new(model.clone(), model.clone(), model)
    }

    pub fn with_config(mut self, config: GatewayConfig) -> Self {
        self.config = config;
        self
    }

    pub fn model(&self, role: ModelRole) -> &dyn ChatModel {
        match role {
            ModelRole::Planner => self.planner.as_ref(),
            ModelRole::Executor => self.executor.as_ref(),
            ModelRole::Judge => self.judge.as_ref(),
        }
    }

    /// Model calls issued so far, retries included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn temperature(&self, role: ModelRole) -> f64 {
        match role {
            ModelRole::Planner => self.config.planner_temperature,
            ModelRole::Executor => self.config.executor_temperature,
            ModelRole::Judge => self.config.judge_temperature,
        }
    }

    pub fn complete(&self, role: ModelRole, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let model = self.model(role);
        let mut attempt = 0;
        loop {
            self.limiter.acquire(self.config.max_concurrent, Duration::from_millis(self.config.min_interval_ms));
            self.calls.fetch_add(1, Ordering::Relaxed);
            let result = model.complete(request);
            self.limiter.release();
            match result {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let backoff = match &e {
                        GatewayError::RateLimited { retry_after: Some(d) } => *d,
                        _ => Duration::from_millis(self.config.retry_base_delay_ms.saturating_mul(1 << attempt)),
                    };
                    log::warn!("{} call failed ({e}); retrying in {backoff:?}", model.name());
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Single-prompt completion at the role's temperature.
    pub fn ask(&self, role: ModelRole, prompt: &str) -> Result<String, GatewayError> {
        let mut request = ChatRequest::prompt(prompt, self.temperature(role));
        request.max_tokens = self.config.max_tokens;
        self.complete(role, &request).map(|c| c.text)
    }

    /// Multi-turn completion at the role's temperature.
    pub fn chat(&self, role: ModelRole, messages: Vec<ChatMessage>) -> Result<String, GatewayError> {
        let request = ChatRequest {
            messages,
            temperature: self.temperature(role),
            max_tokens: self.config.max_tokens,
            want_logprobs: false,
        };
        self.complete(role, &request).map(|c| c.text)
    }

    pub fn yes_no_logprobs(&self, judge_prompt: &str) -> Result<YesNoLogprobs, GatewayError> {
        let request = ChatRequest {
            messages: vec![ChatMessage::user(judge_prompt)],
            temperature: self.config.judge_temperature,
            max_tokens: 1,
            want_logprobs: true,
        };
        let completion = self.complete(ModelRole::Judge, &request)?;
        extract_yes_no(&completion, self.config.logprob_floor)
    }
}
