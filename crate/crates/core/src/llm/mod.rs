//! Uniform chat-completion interface.
//!
//! Two backends implement [`CompletionBackend`]: [`HttpBackend`] speaks the
//! OpenAI-compatible `chat/completions` wire protocol with retry and
//! exponential backoff, and [`ReplayBackend`] serves pre-recorded completions
//! so whole pipeline runs are deterministic and network-free.

mod http;
mod replay;

pub use http::{HttpBackend, RetryPolicy};
pub use replay::{read_entries, request_key, write_entries, RecordingBackend, ReplayBackend, ReplayEntry, ReplayMode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per token used by [`estimate_tokens`].
pub const DEFAULT_BYTES_PER_TOKEN: usize = 3;

/// Conservative token estimate: `ceil(bytes / 3)`.
pub fn estimate_tokens(text: &str) -> usize {
    estimate_tokens_with(text, DEFAULT_BYTES_PER_TOKEN)
}

pub fn estimate_tokens_with(text: &str, bytes_per_token: usize) -> usize {
    let divisor = bytes_per_token.max(1);
    text.len().div_ceil(divisor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    /// Single-user-message request at temperature 0.
    pub fn user_prompt(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: 0.0,
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| LlmError::InvalidRequest("messages must not be empty".into()))?;
        if first.role == Role::Assistant {
            return Err(LlmError::InvalidRequest("first message must be system or user".into()));
        }
        if let Some(i) = self
            .messages
            .iter()
            .position(|m| m.role != Role::Assistant && m.content.is_empty())
        {
            return Err(LlmError::InvalidRequest(format!("message {i} has empty content")));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == Some(0) {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::InvalidRequest("model id is empty".into()));
        }
        Ok(())
    }

    /// The text the model sees, used for budget checks.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("backend exhausted after {attempts} attempts: {last_error}")]
    BackendExhausted { attempts: u32, last_error: String },
    #[error("no replay entry for request {key}")]
    ReplayMiss { key: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("replay script I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub trait CompletionBackend: Send + Sync {
    /// Produce a completion for an already validated request.
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError>;

    /// Validate `request` and return the assistant message content.
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        request.validate()?;
        self.dispatch(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).dispatch(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).dispatch(request)
    }
}
