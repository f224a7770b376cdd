//! The coaching agent: dialogue-state chain, strategy chain, tool-calling
//! response chain and outbound safety filtering, all through [`LlmProvider`].

mod memory;
mod session;
mod states;
mod strategy;
mod tools;

use chrono::{DateTime, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use memory::{
    estimate_tokens, memory_block, MemoryAudit, MemorySummary, DEFAULT_MEMORY_BUDGET_TOKENS,
    MAX_SUMMARY_CHARS,
};
pub use session::{ChatSession, ToolCallRecord, Turn, TurnRole, UserSessions};
pub use states::{
    legal_targets, resolve_transition, DialogueState, Gate, Mode, StateId, Transition,
};
pub use strategy::{parse_strategy_output, MiStrategy, StrategyAnnotation};
pub use tools::{
    parse_generated_plan, plan_target_week, AddWorkoutArgs, DeleteWorkoutArgs, GeneratePlanArgs,
    GeneratedWorkout, QueryHealthDataArgs, ToolError, ToolName, ToolOutput, Widget,
};

use crate::health::HealthStore;
use crate::plan::{propose_progression, PlanBook};
use crate::prompts::{render, PromptLibrary};
use crate::provider::{
    tags, ChatMessage, Completion, CompletionRequest, LlmProvider, ProviderError, ToolCall,
};
use crate::safety::{SafetyFilter, SafetyOutcome};
use crate::time::to_local;
use tools::ToolRun;

/// The user data a coaching step reads and edits.
pub struct CoachEnv<'e> {
    pub plans: &'e mut PlanBook,
    pub health: &'e HealthStore,
    pub tz: Tz,
    pub now: DateTime<Utc>,
    pub user_name: &'e str,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoachConfig {
    pub response_temperature: f32,
    pub max_tokens: u32,
    pub memory_budget_tokens: usize,
    /// Tool dispatches allowed within one user turn.
    pub max_tool_calls: usize,
}

impl Default for CoachConfig {
    fn default() -> Self {
        Self {
            response_temperature: 0.7,
            max_tokens: 800,
            memory_budget_tokens: DEFAULT_MEMORY_BUDGET_TOKENS,
            max_tool_calls: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoachError {
    #[error("user `{user_id}` already has active session `{session_id}`")]
    SessionConflict { user_id: String, session_id: String },
    #[error("no active session")]
    NoActiveSession,
    #[error("empty user message")]
    EmptyMessage,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("model requested more than {0} tool calls in one turn")]
    ToolLoopLimit(usize),
}

impl CoachError {
    /// The same step can be attempted again without side effects.
    pub fn is_retriable(&self) -> bool {
        matches!(self, CoachError::Provider(_) | CoachError::ToolLoopLimit(_))
    }
}

/// What the user sees for one agent turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentTurn {
    pub session_id: String,
    pub text: String,
    pub strategy: StrategyAnnotation,
    pub widgets: Vec<Widget>,
    pub safety_outcome: SafetyOutcome,
    pub state: StateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Transition>,
    pub tool_calls: Vec<ToolCallRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltContext {
    pub messages: Vec<ChatMessage>,
    pub memory_audit: MemoryAudit,
}

#[derive(Debug, Clone, Default)]
pub struct Coach {
    pub prompts: PromptLibrary,
    pub safety: SafetyFilter,
    pub config: CoachConfig,
}

impl Coach {
    pub fn new(prompts: PromptLibrary, safety: SafetyFilter, config: CoachConfig) -> Self {
        Self {
            prompts,
            safety,
            config,
        }
    }

    pub fn start_session<'s>(
        &self,
        sessions: &'s mut UserSessions,
        user_id: &str,
        mode: Mode,
        now: DateTime<Utc>,
    ) -> Result<&'s ChatSession, CoachError> {
        if let Some(active) = &sessions.active {
            return Err(CoachError::SessionConflict {
                user_id: user_id.to_string(),
                session_id: active.session_id.clone(),
            });
        }
        let id = sessions.allocate_session_id();
        Ok(sessions
            .active
            .insert(ChatSession::new(id, user_id.to_string(), mode, now)))
    }

    fn system_prompt(
        &self,
        env: &CoachEnv<'_>,
        session: &ChatSession,
        chain: Option<(&str, &[(&str, &str)])>,
    ) -> String {
        let today = to_local(env.now, env.tz).date().to_string();
        let progression = self.progression_note(env, session);
        let tz = env.tz.name();
        let vars: [(&str, &str); 4] = [
            ("user_name", env.user_name),
            ("today", &today),
            ("timezone", tz),
            ("progression", &progression),
        ];
        let mut parts = Vec::new();
        if let Ok(t) = self.prompts.get("coach/persona") {
            parts.push(render(t, &vars));
        }
        if let Ok(t) = self
            .prompts
            .get(&format!("coach/{}/{}", session.mode, session.state))
        {
            parts.push(render(t, &vars));
        }
        if let Some((chain, extra)) = chain {
            if let Ok(t) = self
                .prompts
                .chain(session.mode.as_str(), session.state.as_str(), chain)
            {
                let all: Vec<(&str, &str)> = vars.iter().chain(extra.iter()).copied().collect();
                parts.push(render(t, &all));
            }
        }
        parts.join("\n\n")
    }

    fn progression_note(&self, env: &CoachEnv<'_>, session: &ChatSession) -> String {
        if session.state != StateId::PlanRevisionOrProgression {
            return "not needed in this topic".into();
        }
        let now_local = to_local(env.now, env.tz);
        match env.plans.plan_at(now_local) {
            Some(plan) => {
                let minutes = env
                    .health
                    .weekly_guideline_minutes(plan.week_start, env.tz)
                    .minutes;
                let advice = propose_progression(plan, minutes);
                serde_json::to_string(&advice).expect("advice serializes")
            }
            None => "no plan this week".into(),
        }
    }

    /// System prompt for the session's (mode, state), memory summaries
    /// (oldest dropped first when over budget), the current plan and the transcript.
    pub fn build_context(
        &self,
        env: &CoachEnv<'_>,
        memory: &[MemorySummary],
        session: &ChatSession,
    ) -> BuiltContext {
        self.context_for(env, memory, session, None)
    }

    fn context_for(
        &self,
        env: &CoachEnv<'_>,
        memory: &[MemorySummary],
        session: &ChatSession,
        chain: Option<(&str, &[(&str, &str)])>,
    ) -> BuiltContext {
        let mut messages = vec![ChatMessage::system(self.system_prompt(env, session, chain))];
        let (block, memory_audit) = memory_block(memory, self.config.memory_budget_tokens);
        if let Some(block) = block {
            messages.push(ChatMessage::system(block));
        }
        let now_local = to_local(env.now, env.tz);
        messages.push(ChatMessage::system(
            match env.plans.plan_at(now_local).or_else(|| env.plans.latest()) {
                Some(plan) => format!("Current plan:\n{}", plan.to_canonical_json()),
                None => "The user does not have a plan yet.".into(),
            },
        ));
        messages.extend(session.messages());
        BuiltContext {
            messages,
            memory_audit,
        }
    }

    /// Runs one tool call under the session's current permissions. Failures
    /// become structured error payloads for the model rather than errors here.
    pub fn dispatch_tool(
        &self,
        provider: &dyn LlmProvider,
        env: &mut CoachEnv<'_>,
        session: &mut ChatSession,
        call: &ToolCall,
    ) -> (ToolCallRecord, Option<Widget>) {
        let state = session.dialogue_state();
        let transcript = session.messages();
        let result = match ToolName::parse(&call.name) {
            None => Err(ToolError::UnknownTool(call.name.clone())),
            Some(tool) if !state.allows(tool) => Err(ToolError::PermissionDenied {
                tool: call.name.clone(),
                state: format!("{}.{}", session.mode, session.state),
            }),
            Some(tool) => ToolRun {
                env,
                provider,
                prompts: &self.prompts,
                mode: session.mode,
                transcript: &transcript,
            }
            .execute(tool, &call.arguments),
        };
        let permitted = ToolName::parse(&call.name).is_some_and(|t| state.allows(t));
        let base = ToolCallRecord {
            id: call.id.clone(),
            name: call.name.clone(),
            arguments: call.arguments.clone(),
            state: session.state,
            permitted,
            ok: false,
            result: serde_json::Value::Null,
        };
        match result {
            Ok(out) => {
                if out.plan_generated {
                    session.plan_generated = true;
                }
                (
                    ToolCallRecord {
                        ok: true,
                        result: out.content,
                        ..base
                    },
                    out.widget,
                )
            }
            Err(e) => {
                tracing::warn!(tool = %call.name, error = %e, "tool call failed");
                (
                    ToolCallRecord {
                        result: e.to_model_payload(),
                        ..base
                    },
                    None,
                )
            }
        }
    }

    /// One user message through the full pipeline. On error the session and
    /// plans are left exactly as they were, so the step can be retried.
    pub fn step(
        &self,
        provider: &dyn LlmProvider,
        env: &mut CoachEnv<'_>,
        sessions: &mut UserSessions,
        user_message: &str,
    ) -> Result<AgentTurn, CoachError> {
        let user_message = user_message.trim();
        if user_message.is_empty() {
            return Err(CoachError::EmptyMessage);
        }
        let mut session = sessions.active.clone().ok_or(CoachError::NoActiveSession)?;
        let plans_before = env.plans.clone();
        match self.run_step(provider, env, &sessions.memory, &mut session, user_message) {
            Ok(turn) => {
                sessions.active = Some(session);
                Ok(turn)
            }
            Err(e) => {
                *env.plans = plans_before;
                Err(e)
            }
        }
    }

    fn run_step(
        &self,
        provider: &dyn LlmProvider,
        env: &mut CoachEnv<'_>,
        memory: &[MemorySummary],
        session: &mut ChatSession,
        user_message: &str,
    ) -> Result<AgentTurn, CoachError> {
        let history = session.messages();
        session.turns.push(Turn {
            role: TurnRole::User,
            text: user_message.to_string(),
            state: session.state,
            at: env.now,
            strategy: None,
            tool_calls: Vec::new(),
            widgets: Vec::new(),
            safety_outcome: None,
            transition: None,
        });

        let transition = if session.mode.uses_state_chain() {
            let allowed = legal_targets(session.mode, session.state)
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ");
            let vars = [
                ("current_state", session.state.as_str()),
                ("allowed_states", allowed.as_str()),
            ];
            let ctx = self.context_for(env, memory, session, Some(("dialogue_state", &vars[..])));
            let req = CompletionRequest::new(tags::DIALOGUE_STATE, ctx.messages)
                .with_temperature(0.0)
                .with_max_tokens(32);
            let proposed = provider.complete(&req)?.text().and_then(parse_state_output);
            if proposed.is_none() {
                tracing::warn!(session = %session.session_id, "unreadable dialogue-state output; staying in place");
            }
            let t = resolve_transition(
                session.mode,
                session.state,
                proposed,
                session.plan_generated,
            );
            session.state = t.to;
            Some(t)
        } else {
            None
        };

        let codes = MiStrategy::ALL
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        let ctx = self.context_for(
            env,
            memory,
            session,
            Some(("mi_strategy", &[("strategies", codes.as_str())][..])),
        );
        let req = CompletionRequest::new(tags::MI_STRATEGY, ctx.messages)
            .with_temperature(0.0)
            .with_max_tokens(120);
        let strategy = parse_strategy_output(provider.complete(&req)?.text().unwrap_or_default());

        let mut records: Vec<ToolCallRecord> = Vec::new();
        let mut widgets: Vec<Widget> = Vec::new();
        let mut exchange: Vec<ChatMessage> = Vec::new();
        let candidate = loop {
            // permissions are read fresh each round; the state cannot change mid-turn
            let schemas = session
                .dialogue_state()
                .allowed_tools
                .iter()
                .map(|t| t.schema())
                .collect();
            let ctx = self.context_for(
                env,
                memory,
                session,
                Some(("response", &[("strategy", strategy.code.as_str())][..])),
            );
            let mut messages = ctx.messages;
            messages.extend(exchange.iter().cloned());
            let req = CompletionRequest::new(tags::RESPONSE, messages)
                .with_tools(schemas)
                .with_temperature(self.config.response_temperature)
                .with_max_tokens(self.config.max_tokens);
            match provider.complete(&req)? {
                Completion::Text(t) => break t,
                Completion::ToolCall(call) => {
                    if records.len() >= self.config.max_tool_calls {
                        return Err(CoachError::ToolLoopLimit(self.config.max_tool_calls));
                    }
                    let (record, widget) = self.dispatch_tool(provider, env, session, &call);
                    exchange.push(ChatMessage::assistant_tool_call(call.clone()));
                    exchange.push(ChatMessage::tool_result(
                        &call.id,
                        record.result.to_string(),
                    ));
                    records.push(record);
                    widgets.extend(widget);
                }
            }
        };

        let filtered = self
            .safety
            .filter_message(provider, user_message, &candidate, &history);
        session.turns.push(Turn {
            role: TurnRole::Agent,
            text: filtered.text.clone(),
            state: session.state,
            at: env.now,
            strategy: Some(strategy.clone()),
            tool_calls: records.clone(),
            widgets: widgets.clone(),
            safety_outcome: Some(filtered.outcome),
            transition,
        });
        Ok(AgentTurn {
            session_id: session.session_id.clone(),
            text: filtered.text,
            strategy,
            widgets,
            safety_outcome: filtered.outcome,
            state: session.state,
            transition,
            tool_calls: records,
        })
    }

    /// Ends the active session. Sessions with user turns are summarized into
    /// memory; a provider failure leaves the session active.
    pub fn end_session(
        &self,
        provider: &dyn LlmProvider,
        sessions: &mut UserSessions,
        now: DateTime<Utc>,
    ) -> Result<Option<MemorySummary>, CoachError> {
        let active = sessions
            .active
            .as_ref()
            .ok_or(CoachError::NoActiveSession)?;
        let summary = if active.user_turn_count() == 0 {
            None
        } else {
            let instructions = self
                .prompts
                .get("coach/chains/summary")
                .unwrap_or("Summarize the conversation.");
            let transcript = active
                .turns
                .iter()
                .map(|t| {
                    format!(
                        "{}: {}",
                        if t.role == TurnRole::User {
                            "User"
                        } else {
                            "Coach"
                        },
                        t.text
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            let req = CompletionRequest::new(
                tags::SUMMARY,
                vec![
                    ChatMessage::system(instructions),
                    ChatMessage::user(transcript),
                ],
            )
            .with_temperature(0.0)
            .with_max_tokens(400);
            let text = match provider.complete(&req)? {
                Completion::Text(t) => t.trim().chars().take(MAX_SUMMARY_CHARS).collect::<String>(),
                Completion::ToolCall(_) => {
                    return Err(
                        ProviderError::Fatal("summary chain returned a tool call".into()).into(),
                    )
                }
            };
            Some(MemorySummary {
                timestamp: now,
                session_id: active.session_id.clone(),
                text,
            })
        };
        let mut ended = sessions.active.take().expect("checked above");
        ended.ended_at = Some(now);
        sessions.ended.push(ended);
        if let Some(s) = &summary {
            sessions.memory.push(s.clone());
        }
        Ok(summary)
    }
}

/// Reads the dialogue-state chain's answer: a bare state id or `{"state": ..}`.
pub fn parse_state_output(text: &str) -> Option<StateId> {
    #[derive(Deserialize)]
    struct Out {
        state: String,
    }
    if let Some(out) = text
        .find('{')
        .zip(text.rfind('}'))
        .filter(|(a, b)| a < b)
        .and_then(|(a, b)| serde_json::from_str::<Out>(&text[a..=b]).ok())
    {
        return StateId::parse_loose(&out.state);
    }
    StateId::parse_loose(text)
}
