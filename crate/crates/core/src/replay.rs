//! Scripted end-to-end runs: a recorded provider script drives one chat
//! session and the notifications that follow it, producing a transcript
//! that must be identical on every run.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coach::{AgentTurn, Coach, MemorySummary, Mode};
use crate::garden::SceneDescriptor;
use crate::notify::{MemorySink, NotificationRecord};
use crate::provider::{RecordingProvider, Script, ScriptedProvider};
use crate::workspace::{UserProfile, UserWorkspace};

/// The bundled onboarding fixture.
pub const ONBOARDING_FIXTURE: &str = include_str!("../fixtures/onboarding.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayTurn {
    pub at: DateTime<Utc>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayFixture {
    pub profile: UserProfile,
    pub mode: Mode,
    pub start_at: DateTime<Utc>,
    pub turns: Vec<ReplayTurn>,
    #[serde(default)]
    pub end_at: Option<DateTime<Utc>>,
    /// Notification ticks run hourly from the end of the chat until this instant.
    #[serde(default)]
    pub ticks_until: Option<DateTime<Utc>>,
    pub script: Script,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("reading fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing fixture: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("starting the session: {0}")]
    Start(#[from] crate::coach::CoachError),
}

impl ReplayFixture {
    pub fn from_json(text: &str) -> Result<Self, ReplayError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn onboarding() -> Self {
        Self::from_json(ONBOARDING_FIXTURE).expect("bundled fixture parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayStep {
    pub at: DateTime<Utc>,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayOutput {
    pub session_id: String,
    pub steps: Vec<ReplayStep>,
    pub summary: Option<MemorySummary>,
    pub plans: Vec<serde_json::Value>,
    pub garden: SceneDescriptor,
    pub notifications: Vec<NotificationRecord>,
    /// Provider calls by tag. Safety checks run concurrently, so only counts are stable.
    pub provider_calls: BTreeMap<String, usize>,
    pub unused_script_entries: usize,
}

impl ReplayOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("replay output serializes")
    }
}

pub fn run_replay(fixture: &ReplayFixture, coach: &Coach) -> Result<ReplayOutput, ReplayError> {
    let scripted = ScriptedProvider::new(fixture.script.clone());
    let provider = RecordingProvider::new(&scripted);
    let mut ws = UserWorkspace::new(fixture.profile.clone());
    let session = ws.start_chat(coach, fixture.mode, fixture.start_at)?;

    let steps = fixture
        .turns
        .iter()
        .map(|t| {
            let (agent, error) = match ws.chat_step(coach, &provider, &t.message, t.at) {
                Ok(turn) => (Some(turn), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ReplayStep {
                at: t.at,
                user: t.message.clone(),
                agent,
                error,
            }
        })
        .collect();

    let end = fixture
        .end_at
        .unwrap_or_else(|| fixture.turns.last().map_or(fixture.start_at, |t| t.at));
    let summary = ws.end_chat(coach, &provider, end).unwrap_or_else(|e| {
        tracing::warn!(error = %e, "replay session could not be summarized");
        None
    });

    let sink = MemorySink::new();
    let mut notifications = Vec::new();
    if let Some(until) = fixture.ticks_until {
        let mut now = end;
        while now <= until {
            notifications.extend(ws.tick(coach, &provider, &sink, now));
            now += Duration::hours(1);
        }
    }

    let mut provider_calls = BTreeMap::new();
    for r in provider.requests() {
        *provider_calls.entry(r.tag).or_insert(0) += 1;
    }
    Ok(ReplayOutput {
        session_id: session.session_id,
        steps,
        summary,
        plans: ws.plans.iter().map(|p| p.to_canonical_value()).collect(),
        garden: ws.garden_descriptor(),
        notifications,
        provider_calls,
        unused_script_entries: scripted.remaining(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coach::{StateId, Widget};

    #[test]
    fn onboarding_fixture_generates_a_plan() {
        let out = run_replay(&ReplayFixture::onboarding(), &Coach::default()).unwrap();
        assert!(
            out.steps.iter().all(|s| s.error.is_none()),
            "{:#?}",
            out.steps
        );
        assert_eq!(out.unused_script_entries, 0);
        let states: Vec<StateId> = out
            .steps
            .iter()
            .map(|s| s.agent.as_ref().unwrap().state)
            .collect();
        assert_eq!(
            states,
            [
                StateId::MotivationHistory,
                StateId::BarriersResources,
                StateId::GoalSetting,
                StateId::GoalSetting,
                StateId::WrapUp
            ]
        );
        assert_eq!(out.plans.len(), 1);
        let widget = &out.steps[3].agent.as_ref().unwrap().widgets[0];
        // later ticks mark the Tuesday walk missed, so compare the schedule only
        let Widget::Plan(shown) = widget else {
            panic!("expected a plan widget, got {widget:?}")
        };
        assert_eq!(shown["weekStart"], out.plans[0]["weekStart"]);
        assert_eq!(shown["workouts"].as_array().unwrap().len(), 3);
        assert!(out.summary.is_some());
        assert!(!out.notifications.is_empty());
    }

    #[test]
    fn replay_is_repeatable() {
        let coach = Coach::default();
        let a = run_replay(&ReplayFixture::onboarding(), &coach)
            .unwrap()
            .to_json();
        let b = run_replay(&ReplayFixture::onboarding(), &coach)
            .unwrap()
            .to_json();
        assert_eq!(a, b);
    }
}
