//! Agent tools: schemas, strict argument parsing and execution against the user's data.

use std::fmt;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{CoachEnv, Mode};
use crate::health::{
    parse_reference_date, AggregateResult, AggregationLevel, AggregationQuery, SampleKind,
};
use crate::plan::{ActivityType, EditActor, Intensity, PlanError, WeeklyPlan, WorkoutSpec};
use crate::prompts::{render, PromptLibrary};
use crate::provider::{
    tags, ChatMessage, Completion, CompletionRequest, LlmProvider, Role, ToolSchema,
};
use crate::time::{to_local, week_start_of};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    QueryHealthData,
    GeneratePlan,
    AddWorkout,
    DeleteWorkout,
}

impl ToolName {
    pub const ALL: [ToolName; 4] = [
        ToolName::QueryHealthData,
        ToolName::GeneratePlan,
        ToolName::AddWorkout,
        ToolName::DeleteWorkout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::QueryHealthData => "query_health_data",
            ToolName::GeneratePlan => "generate_plan",
            ToolName::AddWorkout => "add_workout",
            ToolName::DeleteWorkout => "delete_workout",
        }
    }

    pub fn parse(name: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == name)
    }

    pub fn schema(self) -> ToolSchema {
        let (description, parameters) = match self {
            ToolName::QueryHealthData => (
                "Aggregate the user's wearable data for a day, week or month. Set show_user to display a chart in the chat.",
                json!({
                    "type": "object",
                    "properties": {
                        "sample_type": {"type": "string", "enum": SampleKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>()},
                        "reference_date": {"type": "string", "default": "today",
                            "description": "today, yesterday, this week, last week, this month, last month, or YYYY-MM-DD"},
                        "aggregation_level": {"type": "string", "enum": ["day", "week", "month"], "default": "month"},
                        "show_user": {"type": "boolean", "default": false}
                    },
                    "required": ["sample_type"],
                    "additionalProperties": false
                }),
            ),
            ToolName::GeneratePlan => (
                "Generate the user's weekly exercise plan from this conversation and show it as a plan widget.",
                json!({
                    "type": "object",
                    "properties": {"notes": {"type": "string", "description": "optional preferences to emphasize"}},
                    "additionalProperties": false
                }),
            ),
            ToolName::AddWorkout => (
                "Add one workout to the user's current weekly plan.",
                json!({
                    "type": "object",
                    "properties": {
                        "activity": {"type": "string", "enum": ActivityType::ALL.iter().map(|a| a.as_str()).collect::<Vec<_>>()},
                        "intensity": {"type": "string", "enum": ["light", "moderate", "vigorous"]},
                        "scheduled_start": {"type": "string", "description": "local time, YYYY-MM-DDTHH:MM:SS"},
                        "duration_min": {"type": "integer", "minimum": 1}
                    },
                    "required": ["activity", "intensity", "scheduled_start", "duration_min"],
                    "additionalProperties": false
                }),
            ),
            ToolName::DeleteWorkout => (
                "Remove one workout from the user's current weekly plan by id.",
                json!({
                    "type": "object",
                    "properties": {"workout_id": {"type": "string"}},
                    "required": ["workout_id"],
                    "additionalProperties": false
                }),
            ),
        };
        ToolSchema {
            name: self.as_str().to_string(),
            description: description.to_string(),
            parameters,
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_reference_date() -> String {
    "today".into()
}

fn default_aggregation_level() -> String {
    "month".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryHealthDataArgs {
    pub sample_type: String,
    #[serde(default = "default_reference_date")]
    pub reference_date: String,
    #[serde(default = "default_aggregation_level")]
    pub aggregation_level: String,
    #[serde(default)]
    pub show_user: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratePlanArgs {
    #[serde(default)]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddWorkoutArgs {
    pub activity: ActivityType,
    pub intensity: Intensity,
    pub scheduled_start: NaiveDateTime,
    pub duration_min: u32,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeleteWorkoutArgs {
    pub workout_id: String,
}

/// Rich content attached to an agent turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum Widget {
    /// Canonical plan serialization.
    #[serde(rename = "planWidget")]
    Plan(Value),
    #[serde(rename = "chartWidget")]
    Chart(AggregateResult),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("tool `{tool}` is not available in state `{state}`")]
    PermissionDenied { tool: String, state: String },
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid arguments for `{tool}`: {message}")]
    InvalidArguments { tool: ToolName, message: String },
    #[error("{0}")]
    NotFound(String),
    #[error("`{tool}` failed: {message}")]
    Failed { tool: ToolName, message: String },
}

impl ToolError {
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::PermissionDenied { .. } => "permission_denied",
            ToolError::UnknownTool(_) => "unknown_tool",
            ToolError::InvalidArguments { .. } => "invalid_arguments",
            ToolError::NotFound(_) => "not_found",
            ToolError::Failed { .. } => "failed",
        }
    }

    /// Payload returned to the model in place of a result.
    pub fn to_model_payload(&self) -> Value {
        json!({"error": {"code": self.code(), "message": self.to_string()}})
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub content: Value,
    pub widget: Option<Widget>,
    pub plan_generated: bool,
}

pub(crate) fn parse_args<T: DeserializeOwned>(tool: ToolName, raw: &str) -> Result<T, ToolError> {
    let raw = if raw.trim().is_empty() { "{}" } else { raw };
    serde_json::from_str(raw).map_err(|e| ToolError::InvalidArguments {
        tool,
        message: e.to_string(),
    })
}

fn plan_error(tool: ToolName, e: PlanError) -> ToolError {
    match e {
        PlanError::NotFound(id) => {
            ToolError::NotFound(format!("workout `{id}` not found in the current plan"))
        }
        PlanError::Invalid(_) | PlanError::InvalidRecord { .. } => ToolError::InvalidArguments {
            tool,
            message: e.to_string(),
        },
        other => ToolError::Failed {
            tool,
            message: other.to_string(),
        },
    }
}

pub(crate) struct ToolRun<'a, 'e> {
    pub env: &'a mut CoachEnv<'e>,
    pub provider: &'a dyn LlmProvider,
    pub prompts: &'a PromptLibrary,
    pub mode: Mode,
    /// Conversation so far, used as plan-generation context.
    pub transcript: &'a [ChatMessage],
}

impl ToolRun<'_, '_> {
    pub fn execute(&mut self, tool: ToolName, raw_args: &str) -> Result<ToolOutput, ToolError> {
        match tool {
            ToolName::QueryHealthData => self.query_health_data(parse_args(tool, raw_args)?),
            ToolName::GeneratePlan => self.generate_plan(parse_args(tool, raw_args)?),
            ToolName::AddWorkout => self.add_workout(parse_args(tool, raw_args)?),
            ToolName::DeleteWorkout => self.delete_workout(parse_args(tool, raw_args)?),
        }
    }

    fn query_health_data(&mut self, args: QueryHealthDataArgs) -> Result<ToolOutput, ToolError> {
        let tool = ToolName::QueryHealthData;
        let invalid = |e: crate::health::HealthError| ToolError::InvalidArguments {
            tool,
            message: e.to_string(),
        };
        let query = AggregationQuery {
            sample_type: args.sample_type.parse().map_err(invalid)?,
            reference_date: parse_reference_date(&args.reference_date, self.env.now, self.env.tz)
                .map_err(invalid)?,
            aggregation_level: args
                .aggregation_level
                .parse::<AggregationLevel>()
                .map_err(invalid)?,
            show_user: args.show_user,
        };
        let result = self.env.health.query(&query, self.env.tz);
        let content = json!({"result": result.summary_text(), "shownToUser": result.show_user});
        let widget = result.show_user.then_some(Widget::Chart(result));
        Ok(ToolOutput {
            content,
            widget,
            plan_generated: false,
        })
    }

    fn generate_plan(&mut self, args: GeneratePlanArgs) -> Result<ToolOutput, ToolError> {
        let tool = ToolName::GeneratePlan;
        let today = to_local(self.env.now, self.env.tz).date();
        let week_start = plan_target_week(self.mode, today);
        let request = self.plan_request(week_start, args.notes.as_deref());
        let text = match self.provider.complete(&request) {
            Ok(Completion::Text(t)) => t,
            Ok(Completion::ToolCall(_)) => {
                return Err(ToolError::Failed {
                    tool,
                    message: "plan generator returned a tool call".into(),
                })
            }
            Err(e) => {
                return Err(ToolError::Failed {
                    tool,
                    message: e.to_string(),
                })
            }
        };
        let workouts =
            parse_generated_plan(&text).map_err(|message| ToolError::Failed { tool, message })?;
        let plans = &mut *self.env.plans;
        let week_index = match plans.get(week_start) {
            Some(existing) => existing.week_index,
            None => plans
                .iter()
                .filter(|p| p.week_start < week_start)
                .map(|p| p.week_index)
                .max()
                .map_or(1, |i| i + 1),
        };
        let specs = workouts
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                WorkoutSpec::upcoming(
                    format!("w{}", i + 1),
                    w.activity,
                    w.intensity,
                    w.scheduled_start,
                    w.duration_min,
                )
            })
            .collect();
        let mut plan = WeeklyPlan::from_workouts(week_index, week_start, specs).map_err(|e| {
            ToolError::Failed {
                tool,
                message: format!("generated plan rejected: {e}"),
            }
        })?;
        if let Some(previous) = plans.get(week_start) {
            plan.inherit_edit_log(previous);
            plan.record_regeneration(EditActor::AgentTool, self.env.now);
        }
        let payload = plan.to_canonical_value();
        plans.insert(plan);
        Ok(ToolOutput {
            content: json!({"status": "plan saved and shown to the user", "plan": payload}),
            widget: Some(Widget::Plan(payload)),
            plan_generated: true,
        })
    }

    fn plan_request(&self, week_start: NaiveDate, notes: Option<&str>) -> CompletionRequest {
        let activities = ActivityType::ALL
            .iter()
            .map(|a| a.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        let template = self
            .prompts
            .get("coach/chains/plan_generation")
            .unwrap_or("{{week_start}}");
        let mut messages = vec![ChatMessage::system(render(
            template,
            &[
                ("week_start", &week_start.to_string()),
                ("activities", &activities),
            ],
        ))];
        let history: Vec<String> = self
            .env
            .plans
            .iter()
            .filter(|p| p.week_start < week_start)
            .rev()
            .take(4)
            .map(WeeklyPlan::to_canonical_json)
            .collect();
        if !history.is_empty() {
            messages.push(ChatMessage::system(format!(
                "Earlier plans, newest first:\n{}",
                history.join("\n")
            )));
        }
        let transcript: Vec<String> = self
            .transcript
            .iter()
            .filter(|m| m.tool_call.is_none() && matches!(m.role, Role::User | Role::Assistant))
            .map(|m| {
                format!(
                    "{}: {}",
                    if m.role == Role::User {
                        "User"
                    } else {
                        "Coach"
                    },
                    m.content
                )
            })
            .collect();
        let mut ask = format!(
            "Conversation:\n{}\n\nWrite the plan now.",
            transcript.join("\n")
        );
        if let Some(n) = notes {
            ask.push_str(&format!("\nCoach notes: {n}"));
        }
        messages.push(ChatMessage::user(ask));
        CompletionRequest::new(tags::PLAN_GENERATION, messages)
            .with_temperature(0.0)
            .with_max_tokens(1500)
    }

    fn current_plan(&mut self) -> Result<&mut WeeklyPlan, ToolError> {
        let now_local = to_local(self.env.now, self.env.tz);
        self.env
            .plans
            .plan_at_mut(now_local)
            .ok_or_else(|| ToolError::NotFound("the user has no plan for the current week".into()))
    }

    fn add_workout(&mut self, args: AddWorkoutArgs) -> Result<ToolOutput, ToolError> {
        let tool = ToolName::AddWorkout;
        let at = self.env.now;
        let plan = self.current_plan()?;
        let id = plan.next_workout_id();
        let spec = WorkoutSpec::upcoming(
            id,
            args.activity,
            args.intensity,
            args.scheduled_start,
            args.duration_min,
        );
        plan.add_workout(spec.clone(), EditActor::AgentTool, at)
            .map_err(|e| plan_error(tool, e))?;
        let payload = plan.to_canonical_value();
        Ok(ToolOutput {
            content: json!({"status": "added", "workout": spec}),
            widget: Some(Widget::Plan(payload)),
            plan_generated: false,
        })
    }

    fn delete_workout(&mut self, args: DeleteWorkoutArgs) -> Result<ToolOutput, ToolError> {
        let tool = ToolName::DeleteWorkout;
        let at = self.env.now;
        let plan = self.current_plan()?;
        let removed = plan
            .delete_workout(&args.workout_id, EditActor::AgentTool, at)
            .map_err(|e| plan_error(tool, e))?;
        let payload = plan.to_canonical_value();
        Ok(ToolOutput {
            content: json!({"status": "deleted", "workout": removed}),
            widget: Some(Widget::Plan(payload)),
            plan_generated: false,
        })
    }
}

/// Week a generated plan is written to: the current week during onboarding,
/// the following week during a check-in.
pub fn plan_target_week(mode: Mode, today: NaiveDate) -> NaiveDate {
    let this_week = week_start_of(today);
    match mode {
        Mode::Checkin => this_week + Duration::days(7),
        Mode::Onboarding | Mode::Atwill => this_week,
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GeneratedWorkout {
    pub activity: ActivityType,
    pub intensity: Intensity,
    pub scheduled_start: NaiveDateTime,
    pub duration_min: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratedPlan {
    workouts: Vec<GeneratedWorkout>,
}

/// Parses the plan generator's JSON; an empty workout list is rejected.
pub fn parse_generated_plan(text: &str) -> Result<Vec<GeneratedWorkout>, String> {
    let (a, b) = text
        .find('{')
        .zip(text.rfind('}'))
        .filter(|(a, b)| a < b)
        .ok_or("plan generator returned no JSON object")?;
    let plan: GeneratedPlan =
        serde_json::from_str(&text[a..=b]).map_err(|e| format!("malformed plan JSON: {e}"))?;
    if plan.workouts.is_empty() {
        return Err("generated plan has no workouts".into());
    }
    Ok(plan.workouts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in ToolName::ALL {
            assert_eq!(ToolName::parse(t.as_str()), Some(t));
            assert_eq!(t.schema().name, t.as_str());
        }
        assert_eq!(ToolName::parse("drop_table"), None);
    }

    #[test]
    fn query_defaults_follow_signature() {
        let a: QueryHealthDataArgs =
            parse_args(ToolName::QueryHealthData, r#"{"sample_type":"stepCount"}"#).unwrap();
        assert_eq!(a.reference_date, "today");
        assert_eq!(a.aggregation_level, "month");
        assert!(!a.show_user);
    }

    #[test]
    fn extraneous_arguments_rejected() {
        let err = parse_args::<DeleteWorkoutArgs>(
            ToolName::DeleteWorkout,
            r#"{"workout_id":"w1","force":true}"#,
        )
        .unwrap_err();
        assert_eq!(err.code(), "invalid_arguments");
        assert!(parse_args::<GeneratePlanArgs>(ToolName::GeneratePlan, "").is_ok());
        assert!(
            parse_args::<AddWorkoutArgs>(ToolName::AddWorkout, r#"{"activity":"walking"}"#)
                .is_err()
        );
    }

    #[test]
    fn generated_plan_parsing() {
        let ok = r#"Here you go: {"workouts":[{"activity":"walking","intensity":"moderate","scheduledStart":"2025-05-05T08:00:00","durationMin":20}]}"#;
        assert_eq!(parse_generated_plan(ok).unwrap().len(), 1);
        assert!(parse_generated_plan(r#"{"workouts":[]}"#).is_err());
        assert!(parse_generated_plan("no plan").is_err());
        assert!(parse_generated_plan(r#"{"workouts":[{"activity":"walking","intensity":"moderate","scheduledStart":"2025-05-05T08:00:00","durationMin":20,"mood":"great"}]}"#).is_err());
    }

    #[test]
    fn target_week_by_mode() {
        let wed = NaiveDate::from_ymd_opt(2025, 5, 7).unwrap();
        assert_eq!(
            plan_target_week(Mode::Onboarding, wed),
            NaiveDate::from_ymd_opt(2025, 5, 5).unwrap()
        );
        assert_eq!(
            plan_target_week(Mode::Checkin, wed),
            NaiveDate::from_ymd_opt(2025, 5, 12).unwrap()
        );
    }

    #[test]
    fn widget_wire_shape() {
        let v = serde_json::to_value(Widget::Plan(json!({"weekIndex": 1}))).unwrap();
        assert_eq!(
            v,
            json!({"type": "planWidget", "payload": {"weekIndex": 1}})
        );
    }
}
