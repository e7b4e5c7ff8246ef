//! Chat-completions client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::message::MessageSeq;
use crate::retry::RetryRecord;
use crate::HarnessError;

fn default_max_tokens() -> u32 {
    1024
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    5
}

/// Where and how to call a model. The API key itself never appears here,
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Answer requests. Chain-of-thought needs room, so this is well above
    /// what a bare answer takes.
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_tokens")]
    pub caption_max_tokens: u32,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        ModelEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            max_tokens: default_max_tokens(),
            caption_max_tokens: default_max_tokens(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let rest = self
            .base_url
            .strip_prefix("http://")
            .or_else(|| self.base_url.strip_prefix("https://"))
            .ok_or_else(|| HarnessError::Config(format!("base URL `{}` must start with http:// or https://", self.base_url)))?;
        if rest.is_empty() || rest.starts_with('/') || rest.contains(char::is_whitespace) {
            return Err(HarnessError::Config(format!("base URL `{}` has no host", self.base_url)));
        }
        if self.model.is_empty() {
            return Err(HarnessError::Config("model name is empty".into()));
        }
        if self.max_tokens == 0 || self.caption_max_tokens == 0 {
            return Err(HarnessError::Config("max tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(HarnessError::Config(format!("temperature {} out of range", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: MessageSeq,
    pub max_tokens: u32,
    pub temperature: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, o: Usage) {
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    /// Failed attempts before this response, oldest first.
    pub retries: Vec<RetryRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String, retry_after: Option<Duration> },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("could not decode response: {0}")]
    Decode(String),
}

impl EndpointError {
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Status { status, .. } => *status == 429 || *status == 408 || *status >= 500,
            EndpointError::Transport(_) => true,
            EndpointError::MissingKey(_) | EndpointError::Decode(_) => false,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            EndpointError::MissingKey(_) => "missing_key",
            EndpointError::Status { status: 429, .. } => "rate_limited",
            EndpointError::Status { .. } => "http_status",
            EndpointError::Transport(_) => "transport",
            EndpointError::Decode(_) => "decode",
        }
    }
}

/// Anything that answers a chat request. Implementations must be usable
/// from several threads at once.
pub trait ChatModel: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError>;

    fn name(&self) -> &str;
}

/// The JSON body POSTed to `{base}/chat/completions`.
pub fn wire_body(model: &str, req: &ChatRequest) -> Value {
    json!({
        "model": model,
        "messages": req.messages.wire(),
        "max_tokens": req.max_tokens,
        "temperature": req.temperature,
    })
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<Value>,
}

/// Extracts the assistant text from a chat-completions response body.
pub fn parse_response(body: &str) -> Result<ChatResponse, EndpointError> {
    let w: WireResponse = serde_json::from_str(body).map_err(|e| EndpointError::Decode(e.to_string()))?;
    let choice = w.choices.into_iter().next().ok_or_else(|| EndpointError::Decode("no choices".into()))?;
    let text = match choice.message.content {
        Some(Value::String(s)) => s,
        // some servers return content as a list of text parts
        Some(Value::Array(parts)) => parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect(),
        Some(Value::Null) | None => String::new(),
        Some(other) => return Err(EndpointError::Decode(format!("unexpected content {other}"))),
    };
    Ok(ChatResponse { text, usage: w.usage, retries: Vec::new() })
}

fn retry_after(resp: &ureq::http::Response<ureq::Body>) -> Option<Duration> {
    let v = resp.headers().get("retry-after")?.to_str().ok()?;
    v.trim().parse::<f64>().ok().filter(|s| s.is_finite() && *s >= 0.0).map(Duration::from_secs_f64)
}

/// Blocking HTTP client for one endpoint.
pub struct HttpChatModel {
    endpoint: ModelEndpoint,
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatModel {
    /// Reads the API key from the configured environment variable.
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, HarnessError> {
        endpoint.validate()?;
        let key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EndpointError::MissingKey(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        Ok(HttpChatModel { endpoint, url, key, agent })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }
}

impl ChatModel for HttpChatModel {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let mut call = self.agent.post(&self.url).header("content-type", "application/json");
        if let Some(k) = &self.key {
            call = call.header("authorization", format!("Bearer {k}"));
        }
        let body = serde_json::to_vec(&wire_body(&self.endpoint.model, req)).expect("serializable");
        let mut resp = call.send(&body[..]).map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let wait = retry_after(&resp);
        let text = resp.body_mut().read_to_string().map_err(|e| EndpointError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(500);
            return Err(EndpointError::Status { status, body, retry_after: wait });
        }
        parse_response(&text)
    }

    fn name(&self) -> &str {
        &self.endpoint.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        assert!(ModelEndpoint::new("http://localhost:8000/v1", "m").validate().is_ok());
        assert!(ModelEndpoint::new("localhost:8000", "m").validate().is_err());
        assert!(ModelEndpoint::new("https://", "m").validate().is_err());
        let mut e = ModelEndpoint::new("https://api.example.com/v1", "m");
        e.max_tokens = 0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn defaults_from_json() {
        let e: ModelEndpoint = serde_json::from_str(r#"{"base_url":"http://h","model":"m"}"#).unwrap();
        assert_eq!((e.max_tokens, e.temperature, e.max_retries), (1024, 0.0, 5));
    }

    #[test]
    fn missing_key_is_reported() {
        let mut e = ModelEndpoint::new("http://h", "m");
        e.api_key_env = Some("COGBENCH_TEST_KEY_THAT_IS_NOT_SET".into());
        assert!(matches!(HttpChatModel::new(e), Err(HarnessError::Endpoint(EndpointError::MissingKey(_)))));
    }

    #[test]
    fn response_parsing() {
        let r = parse_response(r#"{"choices":[{"message":{"content":"top right"}}],"usage":{"prompt_tokens":5,"completion_tokens":2}}"#)
            .unwrap();
        assert_eq!(r.text, "top right");
        assert_eq!(r.usage, Some(Usage { prompt_tokens: 5, completion_tokens: 2 }));
        let r = parse_response(r#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#)
            .unwrap();
        assert_eq!(r.text, "ab");
        assert!(matches!(parse_response(r#"{"choices":[]}"#), Err(EndpointError::Decode(_))));
    }

    #[test]
    fn retryable_classes() {
        let s = |status| EndpointError::Status { status, body: String::new(), retry_after: None };
        assert!(s(429).is_retryable());
        assert!(s(503).is_retryable());
        assert!(!s(400).is_retryable());
        assert_eq!(s(429).class(), "rate_limited");
    }
}
