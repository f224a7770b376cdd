//! One user's state bound together: plans, garden, health data, chat
//! sessions and notifications. Every mutation goes through here so the
//! garden and the notification schedule stay consistent with the plans.

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coach::{
    AgentTurn, ChatSession, Coach, CoachEnv, CoachError, MemorySummary, Mode, UserSessions,
};
use crate::garden::{CritterSource, Garden, GardenError, GardenEvent, SceneDescriptor};
use crate::health::{HealthSample, HealthStore, IngestReport};
use crate::notify::{
    generate_content, select_content_class, template_content, ContentRequest, GeneratedBy,
    GeneratedContent, NotificationPrefs, NotificationRecord, NotificationScheduler,
    NotificationSink, DIVERSITY_WINDOW,
};
use crate::plan::{
    compute_completion_rate, EditActor, LinkDecision, PlanBook, PlanError, WeeklyPlan,
    WorkoutPatch, WorkoutRecord, WorkoutSpec,
};
use crate::provider::LlmProvider;
use crate::time::{to_local, week_start_of, DAYS_PER_WEEK};

/// How notification text is produced: by the provider, or from templates only
/// (the control condition).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ContentMode {
    #[default]
    Generated,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    pub timezone: Tz,
    #[serde(default)]
    pub notification_prefs: NotificationPrefs,
    #[serde(default)]
    pub content_mode: ContentMode,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>, display_name: impl Into<String>, timezone: Tz) -> Self {
        Self {
            user_id: user_id.into(),
            display_name: display_name.into(),
            timezone,
            notification_prefs: NotificationPrefs::default(),
            content_mode: ContentMode::default(),
        }
    }
}

/// Which week the garden is showing and the completion fraction it last saw.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GardenCursor {
    /// Unset until the first plan exists; that plan's week is garden week 1.
    pub week_start: Option<NaiveDate>,
    pub fraction: f64,
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("no plan for the week of {0}")]
    NoPlan(NaiveDate),
    #[error("plan belongs to the week of {found}, not {expected}")]
    WeekMismatch {
        expected: NaiveDate,
        found: NaiveDate,
    },
    #[error(transparent)]
    Garden(#[from] GardenError),
}

/// Serializable form of a workspace; the garden is kept as its event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkspaceSnapshot {
    pub profile: UserProfile,
    pub plans: Vec<WeeklyPlan>,
    pub garden_events: Vec<GardenEvent>,
    pub garden_cursor: GardenCursor,
    pub health_samples: Vec<HealthSample>,
    pub workout_records: Vec<WorkoutRecord>,
    pub sessions: UserSessions,
    pub notifications: NotificationScheduler,
}

#[derive(Debug)]
pub struct UserWorkspace {
    pub profile: UserProfile,
    pub plans: PlanBook,
    pub garden: Garden,
    pub garden_cursor: GardenCursor,
    pub health: HealthStore,
    pub workout_records: Vec<WorkoutRecord>,
    pub sessions: UserSessions,
    pub notifications: NotificationScheduler,
}

impl UserWorkspace {
    pub fn new(profile: UserProfile) -> Self {
        Self {
            profile,
            plans: PlanBook::new(),
            garden: Garden::new(),
            garden_cursor: GardenCursor::default(),
            health: HealthStore::new(),
            workout_records: Vec::new(),
            sessions: UserSessions::new(),
            notifications: NotificationScheduler::new(),
        }
    }

    pub fn user_id(&self) -> &str {
        &self.profile.user_id
    }

    pub fn local(&self, now: DateTime<Utc>) -> NaiveDateTime {
        to_local(now, self.profile.timezone)
    }

    pub fn current_plan(&self, now: DateTime<Utc>) -> Option<&WeeklyPlan> {
        self.plans.plan_at(self.local(now))
    }

    pub fn garden_descriptor(&self) -> SceneDescriptor {
        self.garden.state().render_descriptor()
    }

    /// Stores a plan for its week. Replacing an existing plan carries its
    /// edit log over and logs the regeneration.
    pub fn put_plan(
        &mut self,
        mut plan: WeeklyPlan,
        actor: EditActor,
        now: DateTime<Utc>,
    ) -> Result<(), WorkspaceError> {
        let violations = plan.validate();
        if !violations.is_empty() {
            return Err(PlanError::Invalid(violations).into());
        }
        if let Some(previous) = self.plans.get(plan.week_start) {
            plan.inherit_edit_log(previous);
            plan.record_regeneration(actor, now);
        }
        self.plans.insert(plan);
        self.refresh(now);
        Ok(())
    }

    fn plan_mut(&mut self, week_start: NaiveDate) -> Result<&mut WeeklyPlan, WorkspaceError> {
        self.plans
            .get_mut(week_start)
            .ok_or(WorkspaceError::NoPlan(week_start))
    }

    pub fn add_workout(
        &mut self,
        week_start: NaiveDate,
        spec: WorkoutSpec,
        actor: EditActor,
        now: DateTime<Utc>,
    ) -> Result<(), WorkspaceError> {
        self.plan_mut(week_start)?.add_workout(spec, actor, now)?;
        self.refresh(now);
        Ok(())
    }

    pub fn delete_workout(
        &mut self,
        week_start: NaiveDate,
        workout_id: &str,
        actor: EditActor,
        now: DateTime<Utc>,
    ) -> Result<WorkoutSpec, WorkspaceError> {
        let removed = self
            .plan_mut(week_start)?
            .delete_workout(workout_id, actor, now)?;
        self.refresh(now);
        Ok(removed)
    }

    pub fn modify_workout(
        &mut self,
        week_start: NaiveDate,
        workout_id: &str,
        patch: &WorkoutPatch,
        actor: EditActor,
        now: DateTime<Utc>,
    ) -> Result<(), WorkspaceError> {
        self.plan_mut(week_start)?
            .modify_workout(workout_id, patch, actor, now)?;
        self.refresh(now);
        Ok(())
    }

    pub fn mark_complete(
        &mut self,
        week_start: NaiveDate,
        workout_id: &str,
        actor: EditActor,
        now: DateTime<Utc>,
    ) -> Result<(), WorkspaceError> {
        self.plan_mut(week_start)?
            .mark_complete_manual(workout_id, actor, now)?;
        self.refresh(now);
        Ok(())
    }

    /// Links a wearable workout to the plan of its week. Re-presenting a
    /// record returns the decision made the first time.
    pub fn ingest_workout_record(
        &mut self,
        record: WorkoutRecord,
        now: DateTime<Utc>,
    ) -> Result<LinkDecision, WorkspaceError> {
        if let Some(seen) = self.workout_records.iter().find(|r| r.id == record.id) {
            let mut seen = seen.clone();
            return Ok(self.plans.link_workout(&mut seen)?);
        }
        let mut record = record;
        let decision = self.plans.link_workout(&mut record)?;
        self.workout_records.push(record);
        self.refresh(now);
        Ok(decision)
    }

    pub fn ingest_health(&self, batch: &[serde_json::Value]) -> IngestReport {
        self.health.ingest_json(batch)
    }

    /// Closes every garden week that has ended and brings the garden and the
    /// notification schedule in line with the plans.
    pub fn refresh(&mut self, now: DateTime<Utc>) {
        let now_local = self.local(now);
        if self.garden_cursor.week_start.is_none() {
            self.garden_cursor.week_start = self.plans.iter().next().map(|p| p.week_start);
        }
        self.roll_weeks(now_local);
        self.sync_garden();
        for plan in self.plans.iter() {
            self.notifications
                .resync(plan, &self.profile.notification_prefs, now_local);
        }
    }

    fn roll_weeks(&mut self, now_local: NaiveDateTime) {
        let current = week_start_of(now_local.date());
        while let Some(week) = self.garden_cursor.week_start.filter(|w| *w < current) {
            // A week without a plan, or an empty one, is not completed.
            let completed = self
                .plans
                .get(week)
                .and_then(|p| compute_completion_rate(p).ok())
                .is_some_and(|r| r >= 1.0);
            self.sync_garden();
            self.garden.advance_week(completed);
            self.garden_cursor = GardenCursor {
                week_start: Some(week + Duration::days(DAYS_PER_WEEK)),
                fraction: 0.0,
            };
        }
    }

    /// Grows the flower from planned completions and adds a critter for each
    /// completed workout of the garden's week that does not have one yet.
    fn sync_garden(&mut self) {
        let Some(plan) = self
            .garden_cursor
            .week_start
            .and_then(|w| self.plans.get(w))
        else {
            return;
        };
        let has_critter = |garden: &Garden, id: &str| {
            garden
                .state()
                .critters
                .binary_search_by(|c| c.workout_id.as_str().cmp(id))
                .is_ok()
        };
        for w in plan.workouts().iter().filter(|w| w.is_completed()) {
            if !has_critter(&self.garden, &w.id) {
                if let Err(e) = self.garden.spawn_critter(CritterSource::Planned(w)) {
                    tracing::warn!(workout = %w.id, error = %e, "critter not added");
                }
            }
        }
        for r in plan.bonus_records() {
            if !has_critter(&self.garden, &r.id) {
                if let Err(e) = self.garden.spawn_critter(CritterSource::Bonus(r)) {
                    tracing::warn!(record = %r.id, error = %e, "critter not added");
                }
            }
        }
        let Ok(fraction) = compute_completion_rate(plan) else {
            return;
        };
        let old = self.garden_cursor.fraction;
        if fraction > old && !self.garden.state().frozen {
            self.garden
                .apply_progress(old, fraction)
                .expect("fractions are within [0, 1]");
        }
        // Lower fractions after edits are remembered so later completions grow from there.
        self.garden_cursor.fraction = fraction;
    }

    pub fn start_chat(
        &mut self,
        coach: &Coach,
        mode: Mode,
        now: DateTime<Utc>,
    ) -> Result<ChatSession, CoachError> {
        self.refresh(now);
        let user_id = self.profile.user_id.clone();
        coach
            .start_session(&mut self.sessions, &user_id, mode, now)
            .cloned()
    }

    pub fn chat_step(
        &mut self,
        coach: &Coach,
        provider: &dyn LlmProvider,
        message: &str,
        now: DateTime<Utc>,
    ) -> Result<AgentTurn, CoachError> {
        self.refresh(now);
        let mut env = CoachEnv {
            plans: &mut self.plans,
            health: &self.health,
            tz: self.profile.timezone,
            now,
            user_name: &self.profile.display_name,
        };
        let turn = coach.step(provider, &mut env, &mut self.sessions, message)?;
        self.refresh(now);
        Ok(turn)
    }

    pub fn end_chat(
        &mut self,
        coach: &Coach,
        provider: &dyn LlmProvider,
        now: DateTime<Utc>,
    ) -> Result<Option<MemorySummary>, CoachError> {
        coach.end_session(provider, &mut self.sessions, now)
    }

    /// Fires every due notification slot: picks the content class from the
    /// plan as it stands now, produces the text, records it and hands it to
    /// the sink. Delivery failures are logged; the record is kept either way.
    pub fn tick(
        &mut self,
        coach: &Coach,
        provider: &dyn LlmProvider,
        sink: &dyn NotificationSink,
        now: DateTime<Utc>,
    ) -> Vec<NotificationRecord> {
        let now_local = self.local(now);
        for week in [
            week_start_of(now_local.date()) - Duration::days(DAYS_PER_WEEK),
            week_start_of(now_local.date()),
        ] {
            if let Some(plan) = self.plans.get_mut(week) {
                plan.sweep_missed(now_local);
            }
        }
        self.refresh(now);
        let mut fired = Vec::new();
        for due in self.notifications.take_due(now_local) {
            let Some(plan) = self.plans.get(due.week_start) else {
                continue;
            };
            let Some(class) = select_content_class(&due.slot, plan) else {
                tracing::debug!(slot = ?due.slot, "follow-up for a workout no longer in the plan");
                continue;
            };
            let content = match self.profile.content_mode {
                ContentMode::Template => GeneratedContent {
                    text: template_content(&coach.prompts, class, &due.slot, plan),
                    generated_by: GeneratedBy::Template,
                    safety_outcome: None,
                },
                ContentMode::Generated => {
                    let previous = self.notifications.recent_texts(DIVERSITY_WINDOW);
                    let req = ContentRequest {
                        class,
                        slot: &due.slot,
                        plan,
                        memory: &self.sessions.memory,
                        previous_texts: &previous,
                    };
                    generate_content(provider, &coach.safety, &coach.prompts, &req)
                }
            };
            let record = NotificationRecord {
                slot: due.slot,
                content_class: class,
                text: content.text,
                generated_by: content.generated_by,
                delivered_at: now,
                safety_outcome: content.safety_outcome,
            };
            if let Err(e) = sink.deliver(&self.profile.user_id, &record) {
                tracing::warn!(user = %self.profile.user_id, error = %e, "notification delivery failed");
            }
            self.notifications.record(record.clone());
            fired.push(record);
        }
        fired
    }

    pub fn snapshot(&self) -> WorkspaceSnapshot {
        WorkspaceSnapshot {
            profile: self.profile.clone(),
            plans: self.plans.iter().cloned().collect(),
            garden_events: self.garden.events().to_vec(),
            garden_cursor: self.garden_cursor.clone(),
            health_samples: self.health.snapshot(),
            workout_records: self.workout_records.clone(),
            sessions: self.sessions.clone(),
            notifications: self.notifications.clone(),
        }
    }

    /// Rebuilds a workspace; the garden state is recomputed from its events.
    pub fn restore(snapshot: WorkspaceSnapshot) -> Result<Self, WorkspaceError> {
        let mut plans = PlanBook::new();
        for p in snapshot.plans {
            plans.insert(p);
        }
        let health = HealthStore::new();
        health.ingest(snapshot.health_samples);
        Ok(Self {
            profile: snapshot.profile,
            plans,
            garden: Garden::replay(&snapshot.garden_events)?,
            garden_cursor: snapshot.garden_cursor,
            health,
            workout_records: snapshot.workout_records,
            sessions: snapshot.sessions,
            notifications: snapshot.notifications,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garden::Reward;
    use crate::notify::{ContentClass, MemorySink, SlotKind};
    use crate::plan::{ActivityType, Intensity, RecordClassification};
    use crate::provider::{Script, ScriptedProvider};
    use chrono::TimeZone;

    fn tz() -> Tz {
        "America/Los_Angeles".parse().unwrap()
    }

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 5, 5).unwrap()
    }

    fn local(day: i64, h: u32, m: u32) -> NaiveDateTime {
        monday().and_hms_opt(h, m, 0).unwrap() + Duration::days(day)
    }

    fn utc(day: i64, h: u32, m: u32) -> DateTime<Utc> {
        tz().from_local_datetime(&local(day, h, m))
            .unwrap()
            .with_timezone(&Utc)
    }

    fn walks(week: i64) -> WeeklyPlan {
        let start = monday() + Duration::days(7 * week);
        let w = |id: &str, day: i64| {
            WorkoutSpec::upcoming(
                id,
                ActivityType::Walking,
                Intensity::Moderate,
                start.and_hms_opt(8, 0, 0).unwrap() + Duration::days(day),
                20,
            )
        };
        WeeklyPlan::from_workouts(
            week as u32 + 1,
            start,
            vec![w("w1", 0), w("w2", 2), w("w3", 4)],
        )
        .unwrap()
    }

    fn workspace() -> UserWorkspace {
        let mut ws = UserWorkspace::new(UserProfile::new("u1", "Sam", tz()));
        ws.put_plan(walks(0), EditActor::AgentTool, utc(-1, 12, 0))
            .unwrap();
        ws
    }

    #[test]
    fn linked_record_grows_flower_and_adds_critter() {
        let mut ws = workspace();
        let rec = WorkoutRecord::new("r1", ActivityType::Walking, local(0, 8, 7), local(0, 8, 30));
        let d = ws.ingest_workout_record(rec.clone(), utc(0, 9, 0)).unwrap();
        assert_eq!(
            d,
            LinkDecision::Linked {
                workout_id: "w1".into()
            }
        );
        let state = ws.garden.state();
        assert_eq!(state.flower_stage, 1);
        assert_eq!(state.critters.len(), 1);
        assert_eq!(ws.ingest_workout_record(rec, utc(0, 9, 5)).unwrap(), d);
        assert_eq!(ws.garden.state().critters.len(), 1);
        assert_eq!(
            ws.workout_records[0].classification,
            RecordClassification::Linked
        );
    }

    #[test]
    fn bonus_record_adds_critter_without_growth() {
        let mut ws = workspace();
        let rec = WorkoutRecord::new(
            "r9",
            ActivityType::Swimming,
            local(1, 18, 0),
            local(1, 18, 40),
        );
        assert_eq!(
            ws.ingest_workout_record(rec, utc(1, 19, 0)).unwrap(),
            LinkDecision::Bonus
        );
        assert_eq!(ws.garden.state().flower_stage, 0);
        assert_eq!(ws.garden.state().critters.len(), 1);
    }

    #[test]
    fn week_roll_persists_completed_flower() {
        let mut ws = workspace();
        for (id, day) in [("w1", 0), ("w2", 2), ("w3", 4)] {
            ws.mark_complete(monday(), id, EditActor::UserUi, utc(day, 9, 0))
                .unwrap();
        }
        assert_eq!(ws.garden.state().flower_stage, 5);
        ws.put_plan(walks(1), EditActor::AgentTool, utc(6, 12, 0))
            .unwrap();
        ws.refresh(utc(7, 1, 0));
        let state = ws.garden.state();
        assert_eq!(
            (
                state.week_number,
                state.persisted_flowers,
                state.flower_stage
            ),
            (2, 1, 0)
        );
        assert!(state.rewards.contains(&Reward::BirdOnBranch));
        assert!(state.critters.is_empty());
    }

    #[test]
    fn deletion_after_growth_keeps_stage() {
        let mut ws = workspace();
        ws.mark_complete(monday(), "w1", EditActor::UserUi, utc(0, 9, 0))
            .unwrap();
        ws.mark_complete(monday(), "w2", EditActor::UserUi, utc(2, 9, 0))
            .unwrap();
        assert_eq!(ws.garden.state().flower_stage, 3);
        ws.delete_workout(monday(), "w2", EditActor::UserUi, utc(2, 10, 0))
            .unwrap();
        assert_eq!(ws.garden.state().flower_stage, 3);
    }

    #[test]
    fn template_mode_tick_fires_each_slot_once() {
        let mut ws = workspace();
        ws.profile.content_mode = ContentMode::Template;
        let coach = Coach::default();
        let provider = ScriptedProvider::new(Script::default());
        let sink = MemorySink::new();
        let mut all = Vec::new();
        for hour in 0..(7 * 24 + 2) {
            let now = utc(0, 0, 0) + Duration::hours(hour);
            if hour == 9 {
                ws.mark_complete(monday(), "w1", EditActor::UserUi, now)
                    .unwrap();
            }
            all.extend(ws.tick(&coach, &provider, &sink, now));
        }
        assert_eq!(all.len(), 17);
        assert_eq!(sink.delivered().len(), 17);
        let classes: Vec<_> = all
            .iter()
            .map(|r| (r.slot.kind, r.content_class))
            .take(3)
            .collect();
        assert_eq!(
            classes,
            [
                (SlotKind::Morning, ContentClass::ReminderUpcoming),
                (SlotKind::PostActivity, ContentClass::PostActivityCongrats),
                (SlotKind::Evening, ContentClass::EveningCelebration),
            ]
        );
        assert!(all.iter().all(|r| r.generated_by == GeneratedBy::Template));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut ws = workspace();
        ws.mark_complete(monday(), "w1", EditActor::UserUi, utc(0, 9, 0))
            .unwrap();
        let snap = ws.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back = UserWorkspace::restore(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.garden.state(), ws.garden.state());
        assert_eq!(serde_json::to_string(&back.snapshot()).unwrap(), json);
    }
}
