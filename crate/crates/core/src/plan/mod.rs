//! Weekly FITT plans: validation, granular edits, workout linking and plan metrics.

mod activity;
mod book;
mod link;
mod metrics;

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Utc, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use activity::{ActivityCategory, ActivityType, DisplayGroup};
pub use book::PlanBook;
pub use link::{LinkDecision, LINK_WINDOW_MINUTES};
pub use metrics::{
    compute_completion_rate, plan_balance_score, propose_progression, unique_activity_count,
    Progression, ProgressionAdvice, GOAL_MET_THRESHOLD, GUIDELINE_MINUTES_PER_WEEK,
};

use crate::time::{local_midnight, DAYS_PER_WEEK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Intensity {
    Light,
    Moderate,
    Vigorous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WorkoutStatus {
    Upcoming,
    Completed,
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CompletionSource {
    None,
    Linked,
    Manual,
}

/// One planned bout of exercise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WorkoutSpec {
    pub id: String,
    pub activity: ActivityType,
    pub intensity: Intensity,
    /// User-local wall-clock start.
    pub scheduled_start: NaiveDateTime,
    pub duration_min: u32,
    pub status: WorkoutStatus,
    pub completion_source: CompletionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_record_id: Option<String>,
}

impl WorkoutSpec {
    /// A new, not yet completed workout.
    pub fn upcoming(
        id: impl Into<String>,
        activity: ActivityType,
        intensity: Intensity,
        scheduled_start: NaiveDateTime,
        duration_min: u32,
    ) -> Self {
        Self {
            id: id.into(),
            activity,
            intensity,
            scheduled_start,
            duration_min,
            status: WorkoutStatus::Upcoming,
            completion_source: CompletionSource::None,
            linked_record_id: None,
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == WorkoutStatus::Completed
    }

    pub fn scheduled_end(&self) -> NaiveDateTime {
        self.scheduled_start + Duration::minutes(self.duration_min as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RecordClassification {
    Unlinked,
    Linked,
    Bonus,
}

/// A workout observed by a wearable (or logged by hand) that may satisfy a planned workout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WorkoutRecord {
    pub id: String,
    pub activity: ActivityType,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    #[serde(default = "unlinked")]
    pub classification: RecordClassification,
}

fn unlinked() -> RecordClassification {
    RecordClassification::Unlinked
}

impl WorkoutRecord {
    pub fn new(
        id: impl Into<String>,
        activity: ActivityType,
        start: NaiveDateTime,
        end: NaiveDateTime,
    ) -> Self {
        Self {
            id: id.into(),
            activity,
            start,
            end,
            classification: RecordClassification::Unlinked,
        }
    }

    /// Whole minutes between start and end.
    pub fn duration_min(&self) -> u32 {
        (self.end - self.start).num_minutes().max(0) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EditKind {
    Add,
    Delete,
    Modify,
    /// The whole plan was replaced by a freshly generated one.
    Regenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditActor {
    UserUi,
    AgentTool,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanEdit {
    pub kind: EditKind,
    pub timestamp: DateTime<Utc>,
    pub actor: EditActor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workout_id: Option<String>,
}

/// Fields a `modify` edit may change. Unset fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WorkoutPatch {
    #[serde(default)]
    pub activity: Option<ActivityType>,
    #[serde(default)]
    pub intensity: Option<Intensity>,
    #[serde(default)]
    pub scheduled_start: Option<NaiveDateTime>,
    #[serde(default)]
    pub duration_min: Option<u32>,
}

/// A week of planned workouts plus the bonus records logged against that week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WeeklyPlan {
    pub week_index: u32,
    pub week_start: NaiveDate,
    workouts: Vec<WorkoutSpec>,
    #[serde(default)]
    bonus: Vec<WorkoutRecord>,
    #[serde(default)]
    edit_log: Vec<PlanEdit>,
    #[serde(default = "first_workout_number")]
    next_workout_number: u32,
}

fn first_workout_number() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Rule {
    WeekIndexPositive,
    WeekStartMonday,
    DurationPositive,
    OutsideWeek,
    DuplicateId,
    CompletionConsistency,
    LinkConsistency,
}

impl Rule {
    pub fn describe(self) -> &'static str {
        match self {
            Rule::WeekIndexPositive => "weekIndex >= 1",
            Rule::WeekStartMonday => "weekStart must be a Monday",
            Rule::DurationPositive => "durationMin > 0",
            Rule::OutsideWeek => "outside week",
            Rule::DuplicateId => "duplicate workout id",
            Rule::CompletionConsistency => "status = completed iff completionSource != none",
            Rule::LinkConsistency => "linkedRecordId set iff completionSource = linked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workout_id: Option<String>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.workout_id {
            Some(id) => write!(f, "{id}: {}", self.rule.describe()),
            None => f.write_str(self.rule.describe()),
        }
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("workout `{0}` not found")]
    NotFound(String),
    #[error("workout `{0}` is already completed")]
    AlreadyCompleted(String),
    #[error("invalid plan: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("plan has no workouts, progress is undefined")]
    UndefinedProgress,
    #[error("no plan covers the week of {0}")]
    NoPlan(NaiveDate),
    #[error("invalid workout record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
}

impl WeeklyPlan {
    pub fn new(week_index: u32, week_start: NaiveDate) -> Self {
        Self {
            week_index,
            week_start,
            workouts: Vec::new(),
            bonus: Vec::new(),
            edit_log: Vec::new(),
            next_workout_number: 1,
        }
    }

    /// Builds a plan from already-formed workouts, e.g. the output of plan generation.
    /// Ids are kept; the plan is validated before it is returned.
    pub fn from_workouts(
        week_index: u32,
        week_start: NaiveDate,
        workouts: Vec<WorkoutSpec>,
    ) -> Result<Self, PlanError> {
        let mut plan = Self::new(week_index, week_start);
        plan.next_workout_number = workouts.len() as u32 + 1;
        plan.workouts = workouts;
        plan.sort_workouts();
        let violations = plan.validate();
        if violations.is_empty() {
            Ok(plan)
        } else {
            Err(PlanError::Invalid(violations))
        }
    }

    pub fn workouts(&self) -> &[WorkoutSpec] {
        &self.workouts
    }

    pub fn bonus_records(&self) -> &[WorkoutRecord] {
        &self.bonus
    }

    pub fn edit_log(&self) -> &[PlanEdit] {
        &self.edit_log
    }

    pub fn workout(&self, id: &str) -> Option<&WorkoutSpec> {
        self.workouts.iter().find(|w| w.id == id)
    }

    pub fn week_end(&self) -> NaiveDate {
        self.week_start + Duration::days(DAYS_PER_WEEK)
    }

    pub fn covers(&self, at: NaiveDateTime) -> bool {
        at >= local_midnight(self.week_start) && at < local_midnight(self.week_end())
    }

    /// Allocates an id that has never been used in this plan.
    pub fn next_workout_id(&mut self) -> String {
        loop {
            let id = format!("w{}", self.next_workout_number);
            self.next_workout_number += 1;
            if self.workout(&id).is_none() {
                return id;
            }
        }
    }

    /// Checks every plan and workout invariant. An empty list means the plan is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.week_index < 1 {
            out.push(Violation {
                workout_id: None,
                rule: Rule::WeekIndexPositive,
            });
        }
        if self.week_start.weekday() != Weekday::Mon {
            out.push(Violation {
                workout_id: None,
                rule: Rule::WeekStartMonday,
            });
        }
        let mut seen = HashSet::new();
        for w in &self.workouts {
            if !seen.insert(w.id.as_str()) {
                out.push(Violation {
                    workout_id: Some(w.id.clone()),
                    rule: Rule::DuplicateId,
                });
            }
            out.extend(
                self.workout_violations(w)
                    .into_iter()
                    .map(|rule| Violation {
                        workout_id: Some(w.id.clone()),
                        rule,
                    }),
            );
        }
        out
    }

    fn workout_violations(&self, w: &WorkoutSpec) -> Vec<Rule> {
        let mut rules = Vec::new();
        if w.duration_min == 0 {
            rules.push(Rule::DurationPositive);
        }
        if !self.covers(w.scheduled_start) {
            rules.push(Rule::OutsideWeek);
        }
        if (w.status == WorkoutStatus::Completed) != (w.completion_source != CompletionSource::None)
        {
            rules.push(Rule::CompletionConsistency);
        }
        if w.linked_record_id.is_some() != (w.completion_source == CompletionSource::Linked) {
            rules.push(Rule::LinkConsistency);
        }
        rules
    }

    fn log(&mut self, kind: EditKind, actor: EditActor, at: DateTime<Utc>, id: Option<String>) {
        self.edit_log.push(PlanEdit {
            kind,
            timestamp: at,
            actor,
            workout_id: id,
        });
    }

    fn sort_workouts(&mut self) {
        self.workouts.sort_by(|a, b| {
            a.scheduled_start
                .cmp(&b.scheduled_start)
                .then_with(|| a.id.cmp(&b.id))
        });
    }

    fn index_of(&self, id: &str) -> Result<usize, PlanError> {
        self.workouts
            .iter()
            .position(|w| w.id == id)
            .ok_or_else(|| PlanError::NotFound(id.to_string()))
    }

    pub fn add_workout(
        &mut self,
        spec: WorkoutSpec,
        actor: EditActor,
        at: DateTime<Utc>,
    ) -> Result<(), PlanError> {
        let mut violations: Vec<Violation> = self
            .workout_violations(&spec)
            .into_iter()
            .map(|rule| Violation {
                workout_id: Some(spec.id.clone()),
                rule,
            })
            .collect();
        if self.workout(&spec.id).is_some() {
            violations.push(Violation {
                workout_id: Some(spec.id.clone()),
                rule: Rule::DuplicateId,
            });
        }
        if !violations.is_empty() {
            return Err(PlanError::Invalid(violations));
        }
        let id = spec.id.clone();
        self.workouts.push(spec);
        self.sort_workouts();
        self.log(EditKind::Add, actor, at, Some(id));
        Ok(())
    }

    /// Removes a workout. Completed workouts may be deleted too; the edit is still logged.
    pub fn delete_workout(
        &mut self,
        id: &str,
        actor: EditActor,
        at: DateTime<Utc>,
    ) -> Result<WorkoutSpec, PlanError> {
        let idx = self.index_of(id)?;
        let removed = self.workouts.remove(idx);
        self.log(EditKind::Delete, actor, at, Some(removed.id.clone()));
        Ok(removed)
    }

    pub fn modify_workout(
        &mut self,
        id: &str,
        patch: &WorkoutPatch,
        actor: EditActor,
        at: DateTime<Utc>,
    ) -> Result<(), PlanError> {
        let idx = self.index_of(id)?;
        let mut updated = self.workouts[idx].clone();
        if let Some(a) = patch.activity {
            updated.activity = a;
        }
        if let Some(i) = patch.intensity {
            updated.intensity = i;
        }
        if let Some(s) = patch.scheduled_start {
            updated.scheduled_start = s;
        }
        if let Some(d) = patch.duration_min {
            updated.duration_min = d;
        }
        let violations: Vec<Violation> = self
            .workout_violations(&updated)
            .into_iter()
            .map(|rule| Violation {
                workout_id: Some(id.to_string()),
                rule,
            })
            .collect();
        if !violations.is_empty() {
            return Err(PlanError::Invalid(violations));
        }
        self.workouts[idx] = updated;
        self.sort_workouts();
        self.log(EditKind::Modify, actor, at, Some(id.to_string()));
        Ok(())
    }

    pub fn mark_complete_manual(
        &mut self,
        id: &str,
        actor: EditActor,
        at: DateTime<Utc>,
    ) -> Result<(), PlanError> {
        let idx = self.index_of(id)?;
        let w = &mut self.workouts[idx];
        if w.is_completed() {
            return Err(PlanError::AlreadyCompleted(id.to_string()));
        }
        w.status = WorkoutStatus::Completed;
        w.completion_source = CompletionSource::Manual;
        self.log(EditKind::Modify, actor, at, Some(id.to_string()));
        Ok(())
    }

    /// Marks upcoming workouts whose linking window has closed as missed.
    /// Returns the ids that changed. Status sweeps are not plan edits and are not logged.
    pub fn sweep_missed(&mut self, now_local: NaiveDateTime) -> Vec<String> {
        let grace = Duration::minutes(LINK_WINDOW_MINUTES);
        let mut changed = Vec::new();
        for w in &mut self.workouts {
            if w.status == WorkoutStatus::Upcoming && w.scheduled_end() + grace < now_local {
                w.status = WorkoutStatus::Missed;
                changed.push(w.id.clone());
            }
        }
        changed
    }

    /// Records that this plan replaced an earlier version of the same week.
    pub fn record_regeneration(&mut self, actor: EditActor, at: DateTime<Utc>) {
        self.log(EditKind::Regenerate, actor, at, None);
    }

    /// Carries the edit history of a replaced plan over to this one.
    pub fn inherit_edit_log(&mut self, previous: &WeeklyPlan) {
        let mut log = previous.edit_log.clone();
        log.append(&mut self.edit_log);
        self.edit_log = log;
        for record in &previous.bonus {
            if !self.bonus.iter().any(|b| b.id == record.id) {
                self.bonus.push(record.clone());
            }
        }
    }

    pub fn edit_count(&self, actor: EditActor) -> usize {
        self.edit_log.iter().filter(|e| e.actor == actor).count()
    }

    /// Canonical serialization: workouts ordered by scheduled start, ISO-8601 times,
    /// integer minutes. This is the plan widget payload and the REST body.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn to_canonical_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan serializes")
    }

    /// Parses a plan body and restores canonical ordering. Invariants are not checked here.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut plan: WeeklyPlan = serde_json::from_str(text)?;
        plan.sort_workouts();
        Ok(plan)
    }
}
