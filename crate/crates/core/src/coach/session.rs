use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::memory::MemorySummary;
use super::states::{DialogueState, Mode, StateId, Transition};
use super::strategy::StrategyAnnotation;
use super::tools::Widget;
use crate::provider::{ChatMessage, ToolCall};
use crate::safety::SafetyOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TurnRole {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolCallRecord {
    pub id: String,
    pub name: String,
    pub arguments: String,
    /// Dialogue state in force when the call was dispatched.
    pub state: StateId,
    pub permitted: bool,
    pub ok: bool,
    /// Exactly what the model saw as the tool's output.
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Turn {
    pub role: TurnRole,
    pub text: String,
    pub state: StateId,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widgets: Vec<Widget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_outcome: Option<SafetyOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatSession {
    pub session_id: String,
    pub user_id: String,
    pub mode: Mode,
    pub state: StateId,
    pub turns: Vec<Turn>,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<DateTime<Utc>>,
    /// A generate_plan call succeeded in this session.
    pub plan_generated: bool,
}

impl ChatSession {
    pub fn new(session_id: String, user_id: String, mode: Mode, started_at: DateTime<Utc>) -> Self {
        Self {
            session_id,
            user_id,
            mode,
            state: mode.first_state(),
            turns: Vec::new(),
            started_at,
            ended_at: None,
            plan_generated: false,
        }
    }

    pub fn dialogue_state(&self) -> DialogueState {
        DialogueState::new(self.mode, self.state)
    }

    pub fn is_active(&self) -> bool {
        self.ended_at.is_none()
    }

    pub fn user_turn_count(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| t.role == TurnRole::User)
            .count()
    }

    /// Provider-facing transcript, tool exchanges included.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::new();
        for t in &self.turns {
            match t.role {
                TurnRole::User => out.push(ChatMessage::user(&t.text)),
                TurnRole::Agent => {
                    for c in &t.tool_calls {
                        out.push(ChatMessage::assistant_tool_call(ToolCall {
                            id: c.id.clone(),
                            name: c.name.clone(),
                            arguments: c.arguments.clone(),
                        }));
                        out.push(ChatMessage::tool_result(&c.id, c.result.to_string()));
                    }
                    out.push(ChatMessage::assistant(&t.text));
                }
            }
        }
        out
    }
}

/// Everything conversational for one user: the active session, ended
/// sessions, and the summaries that form long-term memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserSessions {
    pub active: Option<ChatSession>,
    pub ended: Vec<ChatSession>,
    pub memory: Vec<MemorySummary>,
    pub next_session_number: u64,
}

impl UserSessions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allocate_session_id(&mut self) -> String {
        self.next_session_number += 1;
        format!("s{}", self.next_session_number)
    }

    pub fn find(&self, session_id: &str) -> Option<&ChatSession> {
        self.active
            .iter()
            .chain(self.ended.iter())
            .find(|s| s.session_id == session_id)
    }
}
