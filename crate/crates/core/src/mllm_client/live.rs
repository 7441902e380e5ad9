use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, ClientError, MllmRequest, MllmResponse, Role, Usage};

/// Wire schema of the chat endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    /// Chat-completions: `Authorization: Bearer`, `image_url` data URLs,
    /// `choices[0].message.content`, `usage.{prompt,completion}_tokens`.
    #[default]
    Openai,
    /// Messages API: `x-api-key`, base64 `image` blocks, `content[].text`,
    /// `usage.{input,output}_tokens`.
    Anthropic,
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub endpoint: String,
    pub dialect: Dialect,
    pub api_key: String,
    pub timeout: Duration,
}

pub struct LiveBackend {
    cfg: LiveConfig,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(cfg: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    fn role(role: Role) -> &'static str {
        match role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    /// Request body. Images go first in the last user message, then its text.
    pub fn body(dialect: Dialect, request: &MllmRequest) -> Value {
        let last_user = request.messages.iter().rposition(|m| m.role == Role::User);
        match dialect {
            Dialect::Openai => {
                let messages: Vec<Value> = request
                    .messages
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let mut content = Vec::new();
                        if Some(i) == last_user {
                            for img in &request.images {
                                let url = format!("data:{};base64,{}", img.media_type, img.base64);
                                content.push(json!({"type": "image_url", "image_url": {"url": url}}));
                            }
                        }
                        content.push(json!({"type": "text", "text": m.text}));
                        json!({"role": Self::role(m.role), "content": content})
                    })
                    .collect();
                json!({
                    "model": request.model,
                    "messages": messages,
                    "max_completion_tokens": request.max_output_tokens,
                    "temperature": request.temperature,
                })
            }
            Dialect::Anthropic => {
                let system: Vec<&str> =
                    request.messages.iter().filter(|m| m.role == Role::System).map(|m| m.text.as_str()).collect();
                let messages: Vec<Value> = request
                    .messages
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.role != Role::System)
                    .map(|(i, m)| {
                        let mut content = Vec::new();
                        if Some(i) == last_user {
                            for img in &request.images {
                                content.push(json!({
                                    "type": "image",
                                    "source": {"type": "base64", "media_type": img.media_type, "data": img.base64},
                                }));
                            }
                        }
                        content.push(json!({"type": "text", "text": m.text}));
                        json!({"role": Self::role(m.role), "content": content})
                    })
                    .collect();
                let mut body = json!({
                    "model": request.model,
                    "messages": messages,
                    "max_tokens": request.max_output_tokens,
                    "temperature": request.temperature,
                });
                if !system.is_empty() {
                    body["system"] = json!(system.join("\n"));
                }
                body
            }
        }
    }

    /// Extracts text and usage from a response body.
    pub fn parse_response(dialect: Dialect, body: &Value) -> Result<(String, Usage), ClientError> {
        let bad = |what: &str| ClientError::BackendFormat(format!("response is missing {what}"));
        let tokens = |v: &Value, key: &str| v.get(key).and_then(Value::as_u64).ok_or_else(|| bad(key));
        match dialect {
            Dialect::Openai => {
                let content = body.pointer("/choices/0/message/content").ok_or_else(|| bad("choices[0].message.content"))?;
                let text = match content {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    Value::Array(parts) => parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect(),
                    _ => return Err(bad("textual message content")),
                };
                let usage = body.get("usage").ok_or_else(|| bad("usage"))?;
                Ok((
                    text,
                    Usage { input_tokens: tokens(usage, "prompt_tokens")?, output_tokens: tokens(usage, "completion_tokens")? },
                ))
            }
            Dialect::Anthropic => {
                let blocks = body.get("content").and_then(Value::as_array).ok_or_else(|| bad("content"))?;
                let text = blocks
                    .iter()
                    .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                    .filter_map(|b| b.get("text").and_then(Value::as_str))
                    .collect();
                let usage = body.get("usage").ok_or_else(|| bad("usage"))?;
                Ok((
                    text,
                    Usage { input_tokens: tokens(usage, "input_tokens")?, output_tokens: tokens(usage, "output_tokens")? },
                ))
            }
        }
    }
}

impl Backend for LiveBackend {
    fn send(&self, request: &MllmRequest) -> Result<MllmResponse, ClientError> {
        let body = Self::body(self.cfg.dialect, request);
        let mut req = self.agent.post(&self.cfg.endpoint).header("content-type", "application/json");
        req = match self.cfg.dialect {
            Dialect::Openai => req.header("authorization", &format!("Bearer {}", self.cfg.api_key)),
            Dialect::Anthropic => req.header("x-api-key", &self.cfg.api_key).header("anthropic-version", "2023-06-01"),
        };
        let started = Instant::now();
        let mut resp = req.send_json(&body).map_err(|e| ClientError::transport(e.to_string(), true))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::transport(e.to_string(), true))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ClientError::Auth(format!("HTTP {status}: {}", snippet(&text)))),
            408 | 429 | 500..=599 => {
                return Err(ClientError::transport(format!("HTTP {status}: {}", snippet(&text)), true))
            }
            _ => return Err(ClientError::transport(format!("HTTP {status}: {}", snippet(&text)), false)),
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ClientError::BackendFormat(format!("response is not JSON: {e}")))?;
        let (text, usage) = Self::parse_response(self.cfg.dialect, &value)?;
        Ok(MllmResponse { text, usage, latency_ms })
    }

    fn name(&self) -> &'static str {
        "live"
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}
