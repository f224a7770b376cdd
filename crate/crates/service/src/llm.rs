//! Blocking client for OpenAI-compatible chat completion endpoints.

use std::time::Duration;

use bloom_core::provider::{
    ChatMessage, Completion, CompletionRequest, LlmProvider, ProviderError, Role, ToolCall,
};
use serde_json::{json, Value};

pub struct OpenAiProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl OpenAiProvider {
    /// Must be called outside an async runtime; the blocking client owns one.
    pub fn new(
        base_url: &str,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(Self {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.into(),
            api_key,
            client,
        })
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    }
}

fn wire_message(m: &ChatMessage) -> Value {
    let mut out = json!({ "role": role_name(m.role), "content": m.content });
    if let Some(call) = &m.tool_call {
        out["content"] = Value::Null;
        out["tool_calls"] = json!([{
            "id": call.id,
            "type": "function",
            "function": { "name": call.name, "arguments": call.arguments },
        }]);
    }
    if let Some(id) = &m.tool_call_id {
        out["tool_call_id"] = json!(id);
    }
    out
}

pub(crate) fn request_body(model: &str, req: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": req.messages.iter().map(wire_message).collect::<Vec<_>>(),
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    });
    if !req.tools.is_empty() {
        body["tools"] = req
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": { "name": t.name, "description": t.description, "parameters": t.parameters },
                })
            })
            .collect();
    }
    body
}

/// Reads the first choice. A tool call wins over text when both are present.
pub(crate) fn parse_response(body: &Value) -> Result<Completion, ProviderError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ProviderError::Fatal("response has no choices".into()))?;
    if let Some(call) = message.pointer("/tool_calls/0") {
        let field = |p: &str| call.pointer(p).and_then(Value::as_str).map(str::to_string);
        let name = field("/function/name")
            .ok_or_else(|| ProviderError::Fatal("tool call without a name".into()))?;
        return Ok(Completion::ToolCall(ToolCall {
            id: field("/id").unwrap_or_else(|| format!("call-{name}")),
            name,
            arguments: field("/function/arguments").unwrap_or_else(|| "{}".into()),
        }));
    }
    match message.get("content").and_then(Value::as_str) {
        Some(text) => Ok(Completion::Text(text.to_string())),
        None => Err(ProviderError::Fatal(
            "response message has neither content nor tool calls".into(),
        )),
    }
}

impl LlmProvider for OpenAiProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let mut call = self
            .client
            .post(&self.endpoint)
            .json(&request_body(&self.model, request));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                ProviderError::Transient(e.to_string())
            } else {
                ProviderError::Fatal(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient(format!(
                "endpoint answered {status}"
            )));
        }
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(ProviderError::Fatal(format!(
                "endpoint answered {status}: {detail}"
            )));
        }
        let body: Value = resp
            .json()
            .map_err(|e| ProviderError::Fatal(format!("unreadable response: {e}")))?;
        parse_response(&body)
    }
}
