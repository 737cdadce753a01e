//! Language-model fallback for queries the grammar does not handle.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::ContextPack;

pub const SYSTEM_PREAMBLE: &str = "You are the assistant of a diabetes risk dashboard used by clinicians. \
Answer using only the patient data, dashboard view and evidence excerpts supplied in the context. \
If the context does not contain the answer, say so. \
Do not invent patient values, model outputs or citations. \
Keep answers short and mark them as generated text.";

pub const URL_ENV: &str = "RISKSCOPE_LLM_URL";
pub const KEY_ENV: &str = "RISKSCOPE_LLM_KEY";
pub const MODEL_ENV: &str = "RISKSCOPE_LLM_MODEL";
pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub context: ContextPack,
    pub query: String,
}

impl ChatRequest {
    pub fn new(context: ContextPack, query: impl Into<String>) -> Self {
        Self {
            system: SYSTEM_PREAMBLE.to_string(),
            context,
            query: query.into(),
        }
    }

    /// Chat-completions body: the preamble, the serialized context pack and
    /// the user query as three messages.
    pub fn to_body(&self, model: &str) -> Value {
        json!({
            "model": model,
            "messages": [
                {"role": "system", "content": self.system},
                {"role": "system", "content": format!("Context: {}", self.context.to_json())},
                {"role": "user", "content": self.query},
            ],
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("service answered with HTTP {0}")]
    Http(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no language model endpoint configured")]
    NotConfigured,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Produced by the deterministic engine.
    Engine,
    /// Generated by the external language model.
    External,
    /// The external model could not be reached.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackAnswer {
    pub text: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

pub const UNAVAILABLE_TEXT: &str = "The language model is currently unavailable, so this question could not be answered. \
The dashboard views and the structured commands (prediction, importance, ranges, recommendations, evidence) still work.";

/// Sends the request when a client is configured. Failures turn into an
/// `Unavailable` answer that names the cause.
pub fn fallback_answer(client: Option<&dyn ChatClient>, request: &ChatRequest) -> FallbackAnswer {
    let result = match client {
        Some(c) => c.complete(request),
        None => Err(ClientError::NotConfigured),
    };
    match result {
        Ok(text) => FallbackAnswer {
            text,
            provenance: Provenance::External,
            cause: None,
        },
        Err(e) => {
            tracing::warn!(error = %e, "language model fallback failed");
            FallbackAnswer {
                text: UNAVAILABLE_TEXT.to_string(),
                provenance: Provenance::Unavailable,
                cause: Some(e.to_string()),
            }
        }
    }
}

/// Blocking HTTP client for an OpenAI-compatible chat-completions endpoint.
pub struct HttpChatClient {
    url: String,
    key: String,
    model: String,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, key: impl Into<String>, model: impl Into<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            key: key.into(),
            model: model.into(),
            http,
        })
    }

    /// Reads the endpoint and key from the environment. Returns `None` when
    /// either is unset.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(URL_ENV).ok().filter(|s| !s.is_empty())?;
        let key = std::env::var(KEY_ENV).ok().filter(|s| !s.is_empty())?;
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| "gpt-4o-mini".to_string());
        Self::new(url, key, model).ok()
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
pub fn extract_content(body: &Value) -> Result<String, ClientError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let resp = self
            .http
            .post(&self.url)
            .bearer_auth(&self.key)
            .json(&request.to_body(&self.model))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ClientError::Timeout
                } else {
                    ClientError::Transport(e.without_url().to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ClientError::Http(status.as_u16()));
        }
        let body: Value = resp.json().map_err(|e| ClientError::Malformed(e.without_url().to_string()))?;
        extract_content(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::{ActiveView, ViewTag};

    fn pack() -> ContextPack {
        ContextPack {
            recent_turns: vec![],
            patient_id: Some(1),
            patient_values: vec![],
            active_view: ActiveView::empty(ViewTag::Record),
            evidence_excerpts: vec![],
            truncated: vec![],
        }
    }

    struct Scripted(Result<String, ClientError>);

    impl ChatClient for Scripted {
        fn complete(&self, _: &ChatRequest) -> Result<String, ClientError> {
            self.0.clone()
        }
    }

    #[test]
    fn body_layout() {
        let body = ChatRequest::new(pack(), "how does insulin resistance develop?").to_body("m");
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[0]["content"], SYSTEM_PREAMBLE);
        assert!(msgs[1]["content"].as_str().unwrap().starts_with("Context: {"));
        assert_eq!(msgs[2]["role"], "user");
    }

    #[test]
    fn failures_degrade_gracefully() {
        let req = ChatRequest::new(pack(), "q");
        for err in [
            ClientError::Timeout,
            ClientError::Http(503),
            ClientError::Malformed("x".into()),
        ] {
            let a = fallback_answer(Some(&Scripted(Err(err.clone()))), &req);
            assert_eq!(a.provenance, Provenance::Unavailable);
            assert_eq!(a.cause, Some(err.to_string()));
        }
        let a = fallback_answer(None, &req);
        assert_eq!(a.cause.as_deref(), Some("no language model endpoint configured"));
        let a = fallback_answer(Some(&Scripted(Ok("generated".into()))), &req);
        assert_eq!(a.provenance, Provenance::External);
        assert_eq!(a.text, "generated");
    }

    #[test]
    fn content_extraction() {
        let ok = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(extract_content(&ok).unwrap(), "hi");
        assert!(matches!(extract_content(&json!({})), Err(ClientError::Malformed(_))));
    }
}
