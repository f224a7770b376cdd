//! The `bloom-proto/1` chat protocol: JSON text frames with a per-session
//! sequence number, and the routing of inbound frames to the coach.

use std::collections::BTreeMap;

use bloom_core::coach::{CoachError, Mode, Widget};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::app::{AppState, UserEntry};
use crate::store::{Collection, PersistenceStore, StoreError};

pub const SUBPROTOCOL: &str = "bloom-proto/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FrameType {
    UserMessage,
    AgentText,
    ToolStatus,
    PlanWidget,
    ChartWidget,
    GardenEvent,
    Error,
    SessionControl,
}

impl FrameType {
    pub const ALL: [FrameType; 8] = [
        FrameType::UserMessage,
        FrameType::AgentText,
        FrameType::ToolStatus,
        FrameType::PlanWidget,
        FrameType::ChartWidget,
        FrameType::GardenEvent,
        FrameType::Error,
        FrameType::SessionControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::UserMessage => "userMessage",
            FrameType::AgentText => "agentText",
            FrameType::ToolStatus => "toolStatus",
            FrameType::PlanWidget => "planWidget",
            FrameType::ChartWidget => "chartWidget",
            FrameType::GardenEvent => "gardenEvent",
            FrameType::Error => "error",
            FrameType::SessionControl => "sessionControl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WireFrame {
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    pub session_id: String,
    pub seq: u64,
    pub payload: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserMessagePayload {
    text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
enum ControlAction {
    Start,
    End,
    Resume,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SessionControlPayload {
    action: ControlAction,
    #[serde(default)]
    mode: Option<Mode>,
    #[serde(default)]
    last_seq: Option<u64>,
}

/// Outbound frames and sequence counters per session. Frames that belong to
/// no session use the empty session id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionFrames {
    pub last_seq: u64,
    pub last_client_seq: u64,
    pub frames: Vec<WireFrame>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameLog {
    sessions: BTreeMap<String, SessionFrames>,
}

impl FrameLog {
    pub fn load(store: &dyn PersistenceStore, user: &str) -> Result<Self, StoreError> {
        let mut log = FrameLog::default();
        for (id, v) in store.list(user, Collection::Frames)? {
            let frames: SessionFrames =
                serde_json::from_value(v).map_err(|e| StoreError::Corrupt {
                    collection: Collection::Frames,
                    id: id.clone(),
                    message: e.to_string(),
                })?;
            log.sessions.insert(id, frames);
        }
        Ok(log)
    }

    pub fn save(&self, store: &dyn PersistenceStore, user: &str) -> Result<(), StoreError> {
        for (id, frames) in &self.sessions {
            let doc = serde_json::to_value(frames).expect("frames serialize");
            store.put(user, Collection::Frames, id, &doc)?;
        }
        Ok(())
    }

    pub fn push(&mut self, session_id: &str, frame_type: FrameType, payload: Value) -> WireFrame {
        let s = self.sessions.entry(session_id.to_string()).or_default();
        s.last_seq += 1;
        let frame = WireFrame {
            frame_type,
            session_id: session_id.to_string(),
            seq: s.last_seq,
            payload,
        };
        s.frames.push(frame.clone());
        frame
    }

    pub fn session(&self, session_id: &str) -> Option<&SessionFrames> {
        self.sessions.get(session_id)
    }

    /// Frames after `last_seq`, for a client resuming a session.
    pub fn since(&self, session_id: &str, last_seq: u64) -> Vec<WireFrame> {
        self.sessions
            .get(session_id)
            .map(|s| {
                s.frames
                    .iter()
                    .filter(|f| f.seq > last_seq)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Accepts a client sequence number if it is above every earlier one for the session.
    fn accept_client_seq(&mut self, session_id: &str, seq: u64) -> bool {
        let s = self.sessions.entry(session_id.to_string()).or_default();
        if seq <= s.last_client_seq {
            return false;
        }
        s.last_client_seq = seq;
        true
    }
}

fn error_payload(code: &str, message: impl Into<String>) -> Value {
    json!({ "code": code, "message": message.into() })
}

fn coach_error_code(e: &CoachError) -> &'static str {
    match e {
        CoachError::SessionConflict { .. } => "session.conflict",
        CoachError::NoActiveSession => "session.none",
        CoachError::EmptyMessage => "message.empty",
        CoachError::Provider(_) => "coach.provider",
        CoachError::ToolLoopLimit(_) => "coach.toolLoop",
    }
}

/// Handles one inbound text frame for an authenticated user and returns the
/// frames to send back, in sequence order. Bad input yields an error frame;
/// it never closes the connection.
pub fn route_frame(state: &AppState, entry: &mut UserEntry, raw: &str) -> Vec<WireFrame> {
    let active_id = entry
        .workspace
        .sessions
        .active
        .as_ref()
        .map(|s| s.session_id.clone())
        .unwrap_or_default();
    let value: Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(e) => {
            return vec![entry.frames.push(
                &active_id,
                FrameType::Error,
                error_payload("frame.malformed", e.to_string()),
            )]
        }
    };
    if let Some(t) = value.get("type").and_then(Value::as_str) {
        if !FrameType::ALL.iter().any(|f| f.as_str() == t) {
            let p = error_payload("frame.unknownType", format!("unknown frame type `{t}`"));
            return vec![entry.frames.push(&active_id, FrameType::Error, p)];
        }
    }
    let frame: WireFrame = match serde_json::from_value(value) {
        Ok(f) => f,
        Err(e) => {
            return vec![entry.frames.push(
                &active_id,
                FrameType::Error,
                error_payload("frame.malformed", e.to_string()),
            )]
        }
    };
    if !entry.frames.accept_client_seq(&frame.session_id, frame.seq) {
        let p = error_payload(
            "frame.seq",
            format!("seq {} is not above the last one received", frame.seq),
        );
        return vec![entry.frames.push(&active_id, FrameType::Error, p)];
    }
    let out = match frame.frame_type {
        FrameType::UserMessage => user_message(state, entry, &frame, &active_id),
        FrameType::SessionControl => session_control(state, entry, &frame, &active_id),
        other => {
            let p = error_payload(
                "frame.unexpectedType",
                format!("clients may not send `{}` frames", other.as_str()),
            );
            vec![entry.frames.push(&active_id, FrameType::Error, p)]
        }
    };
    if let Err(e) = state.persist(entry) {
        tracing::error!(user = entry.workspace.user_id(), error = %e, "persisting after a frame failed");
    }
    out
}

fn user_message(
    state: &AppState,
    entry: &mut UserEntry,
    frame: &WireFrame,
    active_id: &str,
) -> Vec<WireFrame> {
    let payload: UserMessagePayload = match serde_json::from_value(frame.payload.clone()) {
        Ok(p) => p,
        Err(e) => {
            return vec![entry.frames.push(
                active_id,
                FrameType::Error,
                error_payload("frame.malformed", e.to_string()),
            )]
        }
    };
    if active_id.is_empty() {
        return vec![entry.frames.push(
            "",
            FrameType::Error,
            error_payload("session.none", "start a session first"),
        )];
    }
    if frame.session_id != active_id {
        let p = error_payload(
            "session.mismatch",
            format!("active session is `{active_id}`"),
        );
        return vec![entry.frames.push(active_id, FrameType::Error, p)];
    }
    let garden_before = entry.workspace.garden_descriptor();
    let turn = match entry.workspace.chat_step(
        &state.coach,
        state.provider.as_ref(),
        &payload.text,
        state.now(),
    ) {
        Ok(t) => t,
        Err(e) => {
            let p = json!({ "code": coach_error_code(&e), "message": e.to_string(), "retriable": e.is_retriable() });
            return vec![entry.frames.push(active_id, FrameType::Error, p)];
        }
    };
    let mut out = Vec::new();
    for call in &turn.tool_calls {
        let p =
            json!({ "id": call.id, "name": call.name, "permitted": call.permitted, "ok": call.ok });
        out.push(entry.frames.push(active_id, FrameType::ToolStatus, p));
    }
    let text = json!({
        "text": turn.text,
        "state": turn.state,
        "strategy": turn.strategy,
        "safetyOutcome": turn.safety_outcome,
        "transition": turn.transition,
    });
    out.push(entry.frames.push(active_id, FrameType::AgentText, text));
    for w in &turn.widgets {
        let f = match w {
            Widget::Plan(plan) => entry
                .frames
                .push(active_id, FrameType::PlanWidget, plan.clone()),
            Widget::Chart(agg) => entry.frames.push(
                active_id,
                FrameType::ChartWidget,
                serde_json::to_value(agg).expect("serializes"),
            ),
        };
        out.push(f);
    }
    let garden_after = entry.workspace.garden_descriptor();
    if garden_after != garden_before {
        let p = serde_json::to_value(&garden_after).expect("descriptor serializes");
        out.push(entry.frames.push(active_id, FrameType::GardenEvent, p));
    }
    out
}

fn session_control(
    state: &AppState,
    entry: &mut UserEntry,
    frame: &WireFrame,
    active_id: &str,
) -> Vec<WireFrame> {
    let payload: SessionControlPayload = match serde_json::from_value(frame.payload.clone()) {
        Ok(p) => p,
        Err(e) => {
            return vec![entry.frames.push(
                active_id,
                FrameType::Error,
                error_payload("frame.malformed", e.to_string()),
            )]
        }
    };
    let now = state.now();
    match payload.action {
        ControlAction::Start => {
            let mode = payload.mode.unwrap_or(if entry.workspace.plans.is_empty() {
                Mode::Onboarding
            } else {
                Mode::Atwill
            });
            match entry.workspace.start_chat(&state.coach, mode, now) {
                Ok(s) => {
                    let p = json!({ "action": "started", "mode": s.mode, "state": s.state });
                    vec![entry
                        .frames
                        .push(&s.session_id, FrameType::SessionControl, p)]
                }
                Err(e) => {
                    let p = error_payload(coach_error_code(&e), e.to_string());
                    vec![entry.frames.push(active_id, FrameType::Error, p)]
                }
            }
        }
        ControlAction::End => {
            match entry
                .workspace
                .end_chat(&state.coach, state.provider.as_ref(), now)
            {
                Ok(summary) => {
                    let p = json!({ "action": "ended", "summarized": summary.is_some() });
                    vec![entry.frames.push(active_id, FrameType::SessionControl, p)]
                }
                Err(e) => {
                    let p = json!({ "code": coach_error_code(&e), "message": e.to_string(), "retriable": e.is_retriable() });
                    vec![entry.frames.push(active_id, FrameType::Error, p)]
                }
            }
        }
        ControlAction::Resume => {
            if active_id.is_empty() || frame.session_id != active_id {
                let p = error_payload("session.none", "no active session with that id");
                return vec![entry.frames.push(active_id, FrameType::Error, p)];
            }
            let mut out = entry.frames.since(active_id, payload.last_seq.unwrap_or(0));
            let s = entry
                .workspace
                .sessions
                .active
                .as_ref()
                .expect("checked above");
            let p = json!({ "action": "resumed", "mode": s.mode, "state": s.state, "replayed": out.len() });
            out.push(entry.frames.push(active_id, FrameType::SessionControl, p));
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_unknown_fields() {
        let f = WireFrame {
            frame_type: FrameType::AgentText,
            session_id: "s1".into(),
            seq: 3,
            payload: json!({"text": "hi"}),
        };
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains(r#""type":"agentText""#) && text.contains(r#""sessionId":"s1""#));
        assert_eq!(serde_json::from_str::<WireFrame>(&text).unwrap(), f);
        let extra = r#"{"type":"userMessage","sessionId":"s1","seq":1,"payload":{},"x":1}"#;
        assert!(serde_json::from_str::<WireFrame>(extra).is_err());
    }

    #[test]
    fn log_sequence_is_per_session() {
        let mut log = FrameLog::default();
        assert_eq!(log.push("s1", FrameType::AgentText, json!({})).seq, 1);
        assert_eq!(log.push("s1", FrameType::AgentText, json!({})).seq, 2);
        assert_eq!(log.push("s2", FrameType::AgentText, json!({})).seq, 1);
        assert_eq!(log.since("s1", 1).len(), 1);
        assert!(log.accept_client_seq("s1", 1));
        assert!(!log.accept_client_seq("s1", 1));
        assert!(log.accept_client_seq("s1", 5));
    }
}
