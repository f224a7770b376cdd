use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{NotificationSlot, SlotKind};
use crate::coach::{memory_block, MemorySummary, DEFAULT_MEMORY_BUDGET_TOKENS};
use crate::plan::{WeeklyPlan, WorkoutSpec};
use crate::prompts::{render, PromptLibrary};
use crate::provider::{tags, ChatMessage, Completion, CompletionRequest, LlmProvider};
use crate::safety::{SafetyFilter, SafetyOutcome};

/// Prior notification texts shown to the generator.
pub const DIVERSITY_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ContentClass {
    ReminderUpcoming,
    RestDayCelebration,
    PostActivityCongrats,
    PostActivityFollowup,
    EveningCelebration,
    EveningReflection,
}

impl ContentClass {
    pub const ALL: [ContentClass; 6] = [
        ContentClass::ReminderUpcoming,
        ContentClass::RestDayCelebration,
        ContentClass::PostActivityCongrats,
        ContentClass::PostActivityFollowup,
        ContentClass::EveningCelebration,
        ContentClass::EveningReflection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContentClass::ReminderUpcoming => "reminderUpcoming",
            ContentClass::RestDayCelebration => "restDayCelebration",
            ContentClass::PostActivityCongrats => "postActivityCongrats",
            ContentClass::PostActivityFollowup => "postActivityFollowup",
            ContentClass::EveningCelebration => "eveningCelebration",
            ContentClass::EveningReflection => "eveningReflection",
        }
    }

    fn purpose(self) -> &'static str {
        match self {
            ContentClass::ReminderUpcoming => "remind the user of the workouts planned for today",
            ContentClass::RestDayCelebration => "celebrate that today is a rest day",
            ContentClass::PostActivityCongrats => {
                "congratulate the user on completing this workout"
            }
            ContentClass::PostActivityFollowup => {
                "ask how the workout went and invite the user to mark it complete or reschedule it"
            }
            ContentClass::EveningCelebration => "celebrate the activity the user completed today",
            ContentClass::EveningReflection => "invite the user to reflect on how today went",
        }
    }
}

impl fmt::Display for ContentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn planned_on(plan: &WeeklyPlan, date: NaiveDate) -> Vec<&WorkoutSpec> {
    plan.workouts()
        .iter()
        .filter(|w| w.scheduled_start.date() == date)
        .collect()
}

/// `walk at 08:00` style descriptions of what was completed on `date`,
/// planned workouts first, then bonus records.
fn completed_on(plan: &WeeklyPlan, date: NaiveDate) -> Vec<String> {
    let planned = planned_on(plan, date)
        .into_iter()
        .filter(|w| w.is_completed())
        .map(describe);
    let bonus = plan
        .bonus_records()
        .iter()
        .filter(|r| r.start.date() == date)
        .map(|r| format!("{} at {}", r.activity.noun(), r.start.format("%H:%M")));
    planned.chain(bonus).collect()
}

fn describe(w: &WorkoutSpec) -> String {
    format!(
        "{} at {}",
        w.activity.noun(),
        w.scheduled_start.format("%H:%M")
    )
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Content class for a slot given the plan as it stands when the slot fires.
/// `None` for a follow-up whose workout is no longer in the plan.
pub fn select_content_class(slot: &NotificationSlot, plan: &WeeklyPlan) -> Option<ContentClass> {
    let date = slot.fire_at.date();
    Some(match slot.kind {
        SlotKind::Morning if planned_on(plan, date).is_empty() => ContentClass::RestDayCelebration,
        SlotKind::Morning => ContentClass::ReminderUpcoming,
        SlotKind::PostActivity => {
            let w = plan.workout(slot.workout_id.as_deref()?)?;
            if w.is_completed() {
                ContentClass::PostActivityCongrats
            } else {
                ContentClass::PostActivityFollowup
            }
        }
        SlotKind::Evening if completed_on(plan, date).is_empty() => ContentClass::EveningReflection,
        SlotKind::Evening => ContentClass::EveningCelebration,
    })
}

fn slot_vars(class: ContentClass, slot: &NotificationSlot, plan: &WeeklyPlan) -> (String, String) {
    let date = slot.fire_at.date();
    let workouts = match class {
        ContentClass::EveningCelebration => completed_on(plan, date),
        _ => planned_on(plan, date).into_iter().map(describe).collect(),
    };
    let workout = slot
        .workout_id
        .as_deref()
        .and_then(|id| plan.workout(id))
        .map(|w| w.activity.noun().to_string())
        .unwrap_or_else(|| "workout".into());
    (join_list(&workouts), workout)
}

/// Deterministic text for a class; the control path and the fallback for generation.
pub fn template_content(
    prompts: &PromptLibrary,
    class: ContentClass,
    slot: &NotificationSlot,
    plan: &WeeklyPlan,
) -> String {
    let (workouts, workout) = slot_vars(class, slot, plan);
    let template = prompts
        .get(&format!("notifications/templates/{}", class.as_str()))
        .unwrap_or("Check in on your plan in Bloom.");
    render(template, &[("workouts", &workouts), ("workout", &workout)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GeneratedBy {
    Llm,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratedContent {
    pub text: String,
    pub generated_by: GeneratedBy,
    /// Present whenever a generated text went through the safety filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_outcome: Option<SafetyOutcome>,
}

pub struct ContentRequest<'a> {
    pub class: ContentClass,
    pub slot: &'a NotificationSlot,
    pub plan: &'a WeeklyPlan,
    pub memory: &'a [MemorySummary],
    /// Every earlier notification text for the user, oldest first.
    pub previous_texts: &'a [String],
}

/// Generates notification text with the provider. Provider failures and
/// blocked outputs fall back to the class template.
pub fn generate_content(
    provider: &dyn LlmProvider,
    safety: &SafetyFilter,
    prompts: &PromptLibrary,
    req: &ContentRequest<'_>,
) -> GeneratedContent {
    let template = || template_content(prompts, req.class, req.slot, req.plan);
    let (workouts, workout) = slot_vars(req.class, req.slot, req.plan);
    let recent_start = req.previous_texts.len().saturating_sub(DIVERSITY_WINDOW);
    let recent = req.previous_texts[recent_start..]
        .iter()
        .map(|t| format!("- {t}"))
        .collect::<Vec<_>>()
        .join("\n");
    let workouts_var = if req.slot.kind == SlotKind::PostActivity {
        workout
    } else {
        workouts
    };
    let instructions = render(
        prompts
            .get("notifications/generate")
            .unwrap_or("{{purpose}}"),
        &[
            ("purpose", req.class.purpose()),
            (
                "workouts",
                if workouts_var.is_empty() {
                    "none"
                } else {
                    &workouts_var
                },
            ),
            (
                "recent",
                if recent.is_empty() {
                    "(none yet)"
                } else {
                    &recent
                },
            ),
        ],
    );
    let mut messages = vec![ChatMessage::system(instructions)];
    if let (Some(block), _) = memory_block(req.memory, DEFAULT_MEMORY_BUDGET_TOKENS) {
        messages.push(ChatMessage::system(block));
    }
    messages.push(ChatMessage::system(format!(
        "Current plan:\n{}",
        req.plan.to_canonical_json()
    )));
    messages.push(ChatMessage::user(format!(
        "Write the {} notification now.",
        req.class
    )));
    let request = CompletionRequest::new(tags::NOTIFICATION, messages)
        .with_temperature(0.8)
        .with_max_tokens(120);

    let draft = match provider.complete(&request) {
        Ok(Completion::Text(t)) if !t.trim().is_empty() => t.trim().to_string(),
        Ok(_) => {
            tracing::warn!(class = %req.class, "notification generator returned no text; using template");
            return GeneratedContent {
                text: template(),
                generated_by: GeneratedBy::Template,
                safety_outcome: None,
            };
        }
        Err(e) => {
            tracing::warn!(class = %req.class, error = %e, "notification generation failed; using template");
            return GeneratedContent {
                text: template(),
                generated_by: GeneratedBy::Template,
                safety_outcome: None,
            };
        }
    };
    let filtered = safety.filter_message(
        provider,
        &format!("(scheduled {} notification)", req.class),
        &draft,
        &[],
    );
    match filtered.outcome {
        SafetyOutcome::Blocked => GeneratedContent {
            text: template(),
            generated_by: GeneratedBy::Template,
            safety_outcome: Some(SafetyOutcome::Blocked),
        },
        outcome => GeneratedContent {
            text: filtered.text,
            generated_by: GeneratedBy::Llm,
            safety_outcome: Some(outcome),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ActivityType, EditActor, Intensity, WorkoutRecord};
    use crate::provider::{RecordingProvider, Script, ScriptResponse, ScriptedProvider};
    use chrono::{Duration, NaiveDateTime, TimeZone, Utc};

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 5, 5).unwrap()
    }

    fn at(day: i64, h: u32, m: u32) -> NaiveDateTime {
        monday().and_hms_opt(h, m, 0).unwrap() + Duration::days(day)
    }

    fn plan() -> WeeklyPlan {
        WeeklyPlan::from_workouts(
            1,
            monday(),
            vec![
                WorkoutSpec::upcoming(
                    "w1",
                    ActivityType::Walking,
                    Intensity::Moderate,
                    at(0, 8, 0),
                    20,
                ),
                WorkoutSpec::upcoming("w2", ActivityType::Yoga, Intensity::Light, at(0, 18, 0), 30),
            ],
        )
        .unwrap()
    }

    fn slot(kind: SlotKind, fire_at: NaiveDateTime, workout: Option<&str>) -> NotificationSlot {
        NotificationSlot {
            kind,
            fire_at,
            workout_id: workout.map(str::to_string),
        }
    }

    #[test]
    fn truth_table() {
        let mut p = plan();
        let t = Utc.with_ymd_and_hms(2025, 5, 5, 9, 0, 0).unwrap();
        assert_eq!(
            select_content_class(&slot(SlotKind::Morning, at(0, 8, 0), None), &p),
            Some(ContentClass::ReminderUpcoming)
        );
        assert_eq!(
            select_content_class(&slot(SlotKind::Morning, at(1, 8, 0), None), &p),
            Some(ContentClass::RestDayCelebration)
        );
        let post = slot(SlotKind::PostActivity, at(0, 8, 35), Some("w1"));
        assert_eq!(
            select_content_class(&post, &p),
            Some(ContentClass::PostActivityFollowup)
        );
        let evening = slot(SlotKind::Evening, at(0, 20, 0), None);
        assert_eq!(
            select_content_class(&evening, &p),
            Some(ContentClass::EveningReflection)
        );
        p.mark_complete_manual("w1", EditActor::UserUi, t).unwrap();
        assert_eq!(
            select_content_class(&post, &p),
            Some(ContentClass::PostActivityCongrats)
        );
        assert_eq!(
            select_content_class(&evening, &p),
            Some(ContentClass::EveningCelebration)
        );
        p.delete_workout("w1", EditActor::UserUi, t).unwrap();
        assert_eq!(select_content_class(&post, &p), None);
    }

    #[test]
    fn bonus_activity_counts_as_completion_for_the_evening() {
        let mut p = plan();
        let mut r = WorkoutRecord::new("r1", ActivityType::Swimming, at(1, 18, 0), at(1, 18, 40));
        p.link_workout(&mut r).unwrap();
        let evening = slot(SlotKind::Evening, at(1, 20, 0), None);
        assert_eq!(
            select_content_class(&evening, &p),
            Some(ContentClass::EveningCelebration)
        );
        let text = template_content(
            &PromptLibrary::builtin(),
            ContentClass::EveningCelebration,
            &evening,
            &p,
        );
        assert!(text.contains("swim at 18:00"), "{text}");
    }

    #[test]
    fn templates_are_deterministic() {
        let lib = PromptLibrary::builtin();
        let p = plan();
        let morning = slot(SlotKind::Morning, at(0, 8, 0), None);
        let a = template_content(&lib, ContentClass::ReminderUpcoming, &morning, &p);
        assert!(a.contains("walk at 08:00 and yoga session at 18:00"), "{a}");
        assert_eq!(
            a,
            template_content(&lib, ContentClass::ReminderUpcoming, &morning, &p)
        );
        let rest = template_content(
            &lib,
            ContentClass::RestDayCelebration,
            &slot(SlotKind::Morning, at(3, 8, 0), None),
            &p,
        );
        assert!(rest.contains("rest day"));
        for c in ContentClass::ALL {
            let s = slot(SlotKind::PostActivity, at(0, 8, 35), Some("w1"));
            let text = template_content(&lib, c, &s, &p);
            assert!(!text.is_empty() && !text.contains("{{"), "{c}: {text}");
        }
    }

    fn clean_script() -> Script {
        let mut s = Script::default();
        s.default_text("safety.classify.*", r#"{"harmful": false}"#);
        s
    }

    fn request<'a>(
        slot: &'a NotificationSlot,
        plan: &'a WeeklyPlan,
        prev: &'a [String],
    ) -> ContentRequest<'a> {
        ContentRequest {
            class: ContentClass::ReminderUpcoming,
            slot,
            plan,
            memory: &[],
            previous_texts: prev,
        }
    }

    #[test]
    fn llm_text_and_window() {
        let mut s = clean_script();
        s.text(tags::NOTIFICATION, "Time for your 8am walk!");
        let p = RecordingProvider::new(ScriptedProvider::new(s));
        let prev: Vec<String> = (1..=12).map(|i| format!("note number {i:02}")).collect();
        let morning = slot(SlotKind::Morning, at(0, 8, 0), None);
        let plan = plan();
        let out = generate_content(
            &p,
            &SafetyFilter::default(),
            &PromptLibrary::builtin(),
            &request(&morning, &plan, &prev),
        );
        assert_eq!(out.text, "Time for your 8am walk!");
        assert_eq!(
            (out.generated_by, out.safety_outcome),
            (GeneratedBy::Llm, Some(SafetyOutcome::Clean))
        );
        let gen = p
            .requests()
            .into_iter()
            .find(|r| r.tag == tags::NOTIFICATION)
            .unwrap();
        let prompt = &gen.messages[0].content;
        let shown = prev.iter().filter(|t| prompt.contains(t.as_str())).count();
        assert_eq!(shown, 10);
        assert!(!prompt.contains("note number 01") && !prompt.contains("note number 02"));
        assert!(prompt.contains("note number 12"));
    }

    #[test]
    fn provider_failure_uses_template() {
        let mut s = clean_script();
        s.push(
            tags::NOTIFICATION,
            ScriptResponse::Error {
                transient: false,
                message: "down".into(),
            },
        );
        let p = ScriptedProvider::new(s);
        let morning = slot(SlotKind::Morning, at(0, 8, 0), None);
        let plan = plan();
        let lib = PromptLibrary::builtin();
        let out = generate_content(
            &p,
            &SafetyFilter::default(),
            &lib,
            &request(&morning, &plan, &[]),
        );
        assert_eq!(out.generated_by, GeneratedBy::Template);
        assert_eq!(
            out.text,
            template_content(&lib, ContentClass::ReminderUpcoming, &morning, &plan)
        );
    }

    #[test]
    fn blocked_generation_uses_template() {
        let mut s = Script::default();
        s.default_text("safety.classify.*", r#"{"harmful": true}"#);
        s.text(tags::NOTIFICATION, "Skip dinner to burn more!")
            .text(tags::SAFETY_REVISE, "still bad");
        let p = ScriptedProvider::new(s);
        let morning = slot(SlotKind::Morning, at(0, 8, 0), None);
        let plan = plan();
        let out = generate_content(
            &p,
            &SafetyFilter::default(),
            &PromptLibrary::builtin(),
            &request(&morning, &plan, &[]),
        );
        assert_eq!(out.generated_by, GeneratedBy::Template);
        assert_eq!(out.safety_outcome, Some(SafetyOutcome::Blocked));
        assert!(!out.text.contains("dinner"));
    }
}
