//! OpenAI-compatible chat-completion client.
//!
//! Request: `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role", "content"}], "temperature", "max_tokens"}`,
//! plus `"logprobs": true, "top_logprobs": k` when log-probabilities are wanted.
//!
//! Response fields read: `choices[0].message.content` and, for log-probabilities,
//! `choices[0].logprobs.content[] = {"token", "logprob", "top_logprobs": [{"token", "logprob"}]}`.
//!
//! Status mapping: 429 is `RateLimited` (honouring `Retry-After` seconds),
//! 5xx is `Provider`, other non-2xx is `Rejected`. The bearer token is read
//! from the environment variable named in the config, never from files.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatModel, ChatRequest, Completion, GatewayError, TokenLogprob, DEFAULT_API_KEY_ENV};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpChatConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub top_logprobs: u32,
}

impl Default for HttpChatConfig {
    fn default() -> Self {
        HttpChatConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "deepseek-chat".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            top_logprobs: 5,
        }
    }
}

pub struct HttpChatModel {
    config: HttpChatConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatModel {
    pub fn new(config: HttpChatConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatModel { config, api_key, agent }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if request.want_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.config.top_logprobs);
        }
        body
    }
}

/// Decode a chat-completion response body.
pub(crate) fn decode_response(value: &Value) -> Result<Completion, GatewayError> {
    let choice = &value["choices"][0];
    let text = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?
        .to_string();
    let logprobs = choice["logprobs"]["content"].as_array().map(|tokens| {
        tokens
            .iter()
            .filter_map(|t| {
                let top = t["top_logprobs"]
                    .as_array()
                    .map(|alts| {
                        alts.iter()
                            .filter_map(|a| Some((a["token"].as_str()?.to_string(), a["logprob"].as_f64()?)))
                            .collect()
                    })
                    .unwrap_or_default();
                Some(TokenLogprob { token: t["token"].as_str()?.to_string(), logprob: t["logprob"].as_f64()?, top })
            })
            .collect()
    });
    Ok(Completion { text, logprobs })
}

impl ChatModel for HttpChatModel {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(self.body(request)).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout,
            other => GatewayError::Provider(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(GatewayError::RateLimited { retry_after });
        }
        let body = resp.body_mut().read_to_string().map_err(|e| GatewayError::Provider(e.to_string()))?;
        match status {
            200..=299 => {}
            500..=599 => return Err(GatewayError::Provider(format!("HTTP {status}: {body}"))),
            _ => return Err(GatewayError::Rejected(format!("HTTP {status}: {body}"))),
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        decode_response(&value)
    }

    fn name(&self) -> &str {
        &self.config.model
    }
}
