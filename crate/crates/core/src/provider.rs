//! Language-model provider abstraction.
//!
//! Every model interaction in the engine goes through [`LlmProvider`]. Requests
//! carry a `tag` naming the chain that issued them (`dialogue_state`,
//! `safety.classify.bodyImage`, ...) so scripted providers can answer each chain
//! from its own queue and stay deterministic even when calls run concurrently.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod tags {
    pub const DIALOGUE_STATE: &str = "dialogue_state";
    pub const MI_STRATEGY: &str = "mi_strategy";
    pub const RESPONSE: &str = "response";
    pub const PLAN_GENERATION: &str = "plan_generation";
    pub const SUMMARY: &str = "summary";
    pub const NOTIFICATION: &str = "notification";
    pub const SAFETY_REVISE: &str = "safety.revise";
    pub const SAFETY_CLASSIFY_PREFIX: &str = "safety.classify.";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
            tool_call: None,
            tool_call_id: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            tool_call: None,
            tool_call_id: None,
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_call: None,
            tool_call_id: None,
        }
    }

    pub fn assistant_tool_call(call: ToolCall) -> Self {
        Self {
            role: Role::Assistant,
            content: String::new(),
            tool_call: Some(call),
            tool_call_id: None,
        }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_call: None,
            tool_call_id: Some(call_id.into()),
        }
    }
}

/// JSON-schema description of a callable tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Raw JSON argument string as produced by the model.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub tag: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub tools: Vec<ToolSchema>,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(tag: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            tag: tag.into(),
            messages,
            tools: Vec::new(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }

    pub fn with_tools(mut self, tools: Vec<ToolSchema>) -> Self {
        self.tools = tools;
        self
    }

    pub fn with_temperature(mut self, t: f32) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Completion {
    Text(String),
    ToolCall(ToolCall),
}

impl Completion {
    pub fn text(&self) -> Option<&str> {
        match self {
            Completion::Text(t) => Some(t),
            Completion::ToolCall(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
    #[error("script has no response for tag `{0}`")]
    ScriptExhausted(String),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for Arc<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        (**self).complete(request)
    }
}

/// Provider backed by a closure; handy for rule-driven test doubles.
pub struct FnProvider<F>(pub F);

impl<F> LlmProvider for FnProvider<F>
where
    F: Fn(&CompletionRequest) -> Result<Completion, ProviderError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        (self.0)(request)
    }
}

/// One scripted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScriptResponse {
    Text(String),
    ToolCall {
        name: String,
        #[serde(default)]
        arguments: serde_json::Value,
    },
    Error {
        #[serde(default)]
        transient: bool,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: String,
    pub response: ScriptResponse,
}

/// Recorded-exchange fixture file format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    /// Fallback answers by tag. A key ending in `*` matches any tag with that prefix.
    #[serde(default)]
    pub defaults: HashMap<String, ScriptResponse>,
    #[serde(default)]
    pub exchanges: Vec<ScriptEntry>,
}

#[derive(Debug, Error)]
pub enum ScriptLoadError {
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing script: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptLoadError> {
        Ok(Self::from_json(&std::fs::read_to_string(path)?)?)
    }

    pub fn push(&mut self, tag: impl Into<String>, response: ScriptResponse) -> &mut Self {
        self.exchanges.push(ScriptEntry {
            tag: tag.into(),
            response,
        });
        self
    }

    pub fn text(&mut self, tag: impl Into<String>, text: impl Into<String>) -> &mut Self {
        self.push(tag, ScriptResponse::Text(text.into()))
    }

    pub fn default_text(&mut self, tag: impl Into<String>, text: impl Into<String>) -> &mut Self {
        self.defaults
            .insert(tag.into(), ScriptResponse::Text(text.into()));
        self
    }
}

/// Replays a [`Script`]: each tag has its own FIFO queue, falling back to the
/// script's defaults once the queue is empty.
pub struct ScriptedProvider {
    queues: Mutex<HashMap<String, VecDeque<ScriptResponse>>>,
    defaults: HashMap<String, ScriptResponse>,
    calls: AtomicU64,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        let mut queues: HashMap<String, VecDeque<ScriptResponse>> = HashMap::new();
        for entry in script.exchanges {
            queues
                .entry(entry.tag)
                .or_default()
                .push_back(entry.response);
        }
        Self {
            queues: Mutex::new(queues),
            defaults: script.defaults,
            calls: AtomicU64::new(0),
        }
    }

    /// Scripted responses not yet consumed.
    pub fn remaining(&self) -> usize {
        self.queues
            .lock()
            .expect("script lock poisoned")
            .values()
            .map(VecDeque::len)
            .sum()
    }

    fn default_for(&self, tag: &str) -> Option<&ScriptResponse> {
        if let Some(r) = self.defaults.get(tag) {
            return Some(r);
        }
        self.defaults
            .iter()
            .filter_map(|(k, v)| k.strip_suffix('*').map(|p| (p, v)))
            .filter(|(prefix, _)| tag.starts_with(prefix))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, v)| v)
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let popped = self
            .queues
            .lock()
            .expect("script lock poisoned")
            .get_mut(&request.tag)
            .and_then(VecDeque::pop_front);
        let response = match popped {
            Some(r) => r,
            None => self
                .default_for(&request.tag)
                .cloned()
                .ok_or_else(|| ProviderError::ScriptExhausted(request.tag.clone()))?,
        };
        match response {
            ScriptResponse::Text(t) => Ok(Completion::Text(t)),
            ScriptResponse::ToolCall { name, arguments } => Ok(Completion::ToolCall(ToolCall {
                id: format!("call-{n}"),
                name,
                arguments: match arguments {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                },
            })),
            ScriptResponse::Error {
                transient: true,
                message,
            } => Err(ProviderError::Transient(message)),
            ScriptResponse::Error {
                transient: false,
                message,
            } => Err(ProviderError::Fatal(message)),
        }
    }
}

/// Wraps a provider and keeps every request it sees.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<Vec<CompletionRequest>>,
}

impl<P: LlmProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().expect("log lock poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("log lock poisoned").len()
    }

    pub fn clear(&self) {
        self.log.lock().expect("log lock poisoned").clear();
    }
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        self.log
            .lock()
            .expect("log lock poisoned")
            .push(request.clone());
        self.inner.complete(request)
    }
}

/// Retries transient failures with exponential backoff: `1 + retries` attempts total.
pub struct RetryingProvider<P> {
    inner: P,
    retries: u32,
    base_delay: Duration,
}

impl<P: LlmProvider> RetryingProvider<P> {
    pub const DEFAULT_RETRIES: u32 = 2;

    pub fn new(inner: P) -> Self {
        Self {
            inner,
            retries: Self::DEFAULT_RETRIES,
            base_delay: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, retries: u32, base_delay: Duration) -> Self {
        self.retries = retries;
        self.base_delay = base_delay;
        self
    }
}

impl<P: LlmProvider> LlmProvider for RetryingProvider<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_transient() && attempt < self.retries => {
                    let delay = self.base_delay * 2u32.pow(attempt);
                    tracing::warn!(tag = %request.tag, attempt, error = %e, "retrying provider call");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
