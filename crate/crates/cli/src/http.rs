//! Chat-completion client for OpenAI-style HTTP endpoints.

use std::time::Duration;

use afa_core::extraction::{ChatClient, ChatError, ChatRequest};
use afa_core::pipeline::{BuiltinClients, ClientFactory, ClientSpec, PipelineConfig, PipelineError};
use serde_json::{json, Value};

pub struct HttpClient {
    model: String,
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(model: impl Into<String>, endpoint: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        Self {
            model: model.into(),
            endpoint: endpoint.into(),
            token,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let s = &request.settings;
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": s.temperature,
            "top_p": s.top_p,
            "max_tokens": s.max_tokens,
        });
        if !s.stop_sequences.is_empty() {
            body["stop"] = json!(s.stop_sequences);
        }
        body
    }
}

fn retry_after_ms(resp: &ureq::Response) -> Option<u64> {
    let secs: f64 = resp.header("retry-after")?.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| (secs * 1000.0) as u64)
}

/// `choices[0].message.content` of a completion response.
pub fn completion_text(body: &Value) -> Option<&str> {
    body.get("choices")?.get(0)?.get("message")?.get("content")?.as_str()
}

impl ChatClient for HttpClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        match req.send_json(self.body(request)) {
            Ok(resp) => {
                let body: Value = resp
                    .into_json()
                    .map_err(|e| ChatError::Transport(format!("unreadable response body: {e}")))?;
                completion_text(&body)
                    .map(str::to_string)
                    .ok_or_else(|| ChatError::Transport("response has no choices[0].message.content".into()))
            }
            Err(ureq::Error::Status(429, resp)) => Err(ChatError::RateLimited {
                retry_after_ms: retry_after_ms(&resp),
            }),
            Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                Err(ChatError::Transport(format!("{code} {}", resp.status_text())))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(ChatError::Fatal(format!("{code}: {}", text.trim())))
            }
            Err(ureq::Error::Transport(t)) => Err(ChatError::Transport(t.to_string())),
        }
    }
}

/// Builtin clients plus `http`, with tokens read from the environment.
pub struct CliClients;

impl ClientFactory for CliClients {
    fn build(&self, spec: &ClientSpec, config: &PipelineConfig) -> Result<Box<dyn ChatClient>, PipelineError> {
        match spec {
            ClientSpec::Http {
                model,
                endpoint,
                auth_token_env,
                timeout_secs,
            } => {
                let token = match auth_token_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        PipelineError::Config(format!("client `{model}`: auth token variable `{var}` is not set"))
                    })?),
                    None => None,
                };
                Ok(Box::new(HttpClient::new(
                    model.clone(),
                    endpoint.clone(),
                    token,
                    Duration::from_secs(*timeout_secs),
                )))
            }
            other => BuiltinClients.build(other, config),
        }
    }
}
