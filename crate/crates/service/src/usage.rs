//! App usage events and per-screen daily totals.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use bloom_core::time::to_local;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum UsageKind {
    ScreenVisit,
    SessionStart,
    SessionEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Screen {
    Today,
    Plan,
    Insights,
    Chat,
}

/// Request body; the user comes from the bearer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UsageEventInput {
    pub kind: UsageKind,
    #[serde(default)]
    pub screen: Option<Screen>,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub duration_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UsageEvent {
    pub user_id: String,
    pub kind: UsageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<Screen>,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("durationSec must be a finite number >= 0")]
    InvalidDuration,
    #[error("durationSec is only allowed on sessionEnd and screenVisit events")]
    UnexpectedDuration,
    #[error("screenVisit events need a screen")]
    MissingScreen,
    #[error("only screenVisit events name a screen")]
    UnexpectedScreen,
}

impl UsageEvent {
    pub fn validate(input: UsageEventInput, user_id: &str) -> Result<Self, UsageError> {
        if let Some(d) = input.duration_sec {
            if !d.is_finite() || d < 0.0 {
                return Err(UsageError::InvalidDuration);
            }
            if input.kind == UsageKind::SessionStart {
                return Err(UsageError::UnexpectedDuration);
            }
        }
        match (input.kind, input.screen) {
            (UsageKind::ScreenVisit, None) => return Err(UsageError::MissingScreen),
            (UsageKind::SessionStart | UsageKind::SessionEnd, Some(_)) => {
                return Err(UsageError::UnexpectedScreen)
            }
            _ => {}
        }
        Ok(Self {
            user_id: user_id.to_string(),
            kind: input.kind,
            screen: input.screen,
            timestamp: input.timestamp,
            duration_sec: input.duration_sec,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScreenUsage {
    pub visits: usize,
    pub total_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DailyScreenUsage {
    pub date: NaiveDate,
    pub screen: Screen,
    pub visits: usize,
    pub total_sec: f64,
}

/// Screen-visit counts and durations per user-local day and screen.
pub fn daily_screen_usage(events: &[UsageEvent], tz: Tz) -> Vec<DailyScreenUsage> {
    let mut acc: BTreeMap<(NaiveDate, Screen), ScreenUsage> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == UsageKind::ScreenVisit) {
        let Some(screen) = e.screen else { continue };
        let slot = acc
            .entry((to_local(e.timestamp, tz).date(), screen))
            .or_default();
        slot.visits += 1;
        slot.total_sec += e.duration_sec.unwrap_or(0.0);
    }
    acc.into_iter()
        .map(|((date, screen), u)| DailyScreenUsage {
            date,
            screen,
            visits: u.visits,
            total_sec: u.total_sec,
        })
        .collect()
}
