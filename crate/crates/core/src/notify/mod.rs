//! Push notifications: a morning and an evening slot every day plus a
//! follow-up after each planned workout, with generated or templated text.

mod content;
mod scheduler;
mod sink;

use chrono::{Duration, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

pub use content::{
    generate_content, select_content_class, template_content, ContentClass, ContentRequest,
    GeneratedBy, GeneratedContent, DIVERSITY_WINDOW,
};
pub use scheduler::{DueSlot, NotificationRecord, NotificationScheduler, SlotKey};
pub use sink::{ConsoleSink, MemorySink, NotificationSink, SinkError};

use crate::plan::WeeklyPlan;
use crate::time::local_midnight;

/// Minutes after a workout's scheduled end that its follow-up fires.
pub const POST_ACTIVITY_DELAY_MIN: i64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SlotKind {
    Morning,
    Evening,
    PostActivity,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationSlot {
    pub kind: SlotKind,
    /// User-local wall-clock time.
    pub fire_at: NaiveDateTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workout_id: Option<String>,
}

impl NotificationSlot {
    pub fn key(&self) -> SlotKey {
        SlotKey {
            fire_at: self.fire_at,
            kind: self.kind,
            workout_id: self.workout_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationPrefs {
    pub morning_time: NaiveTime,
    pub evening_time: NaiveTime,
}

impl Default for NotificationPrefs {
    fn default() -> Self {
        Self {
            morning_time: NaiveTime::from_hms_opt(8, 0, 0).expect("valid time"),
            evening_time: NaiveTime::from_hms_opt(20, 0, 0).expect("valid time"),
        }
    }
}

/// Seven morning and seven evening slots plus one follow-up per workout,
/// ordered by fire time, then kind, then workout id.
pub fn schedule_for_plan(plan: &WeeklyPlan, prefs: &NotificationPrefs) -> Vec<NotificationSlot> {
    let mut slots = Vec::with_capacity(14 + plan.workouts().len());
    for day in plan.week_start.iter_days().take(7) {
        let midnight = local_midnight(day);
        slots.push(NotificationSlot {
            kind: SlotKind::Morning,
            fire_at: midnight.date().and_time(prefs.morning_time),
            workout_id: None,
        });
        slots.push(NotificationSlot {
            kind: SlotKind::Evening,
            fire_at: midnight.date().and_time(prefs.evening_time),
            workout_id: None,
        });
    }
    for w in plan.workouts() {
        slots.push(NotificationSlot {
            kind: SlotKind::PostActivity,
            fire_at: w.scheduled_end() + Duration::minutes(POST_ACTIVITY_DELAY_MIN),
            workout_id: Some(w.id.clone()),
        });
    }
    slots.sort_by_key(|a| a.key());
    slots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ActivityType, Intensity, WorkoutSpec};
    use chrono::NaiveDate;

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 5, 5).unwrap()
    }

    fn at(day: i64, h: u32, m: u32) -> NaiveDateTime {
        monday().and_hms_opt(h, m, 0).unwrap() + Duration::days(day)
    }

    #[test]
    fn empty_plan_has_fourteen_slots() {
        let slots = schedule_for_plan(&WeeklyPlan::new(1, monday()), &NotificationPrefs::default());
        assert_eq!(slots.len(), 14);
        assert_eq!(slots[0].fire_at, at(0, 8, 0));
        assert_eq!(slots[1].fire_at, at(0, 20, 0));
        assert!(slots.windows(2).all(|w| w[0].fire_at <= w[1].fire_at));
    }

    #[test]
    fn post_activity_fifteen_minutes_after_end() {
        let plan = WeeklyPlan::from_workouts(
            1,
            monday(),
            vec![WorkoutSpec::upcoming(
                "w1",
                ActivityType::Walking,
                Intensity::Moderate,
                at(0, 8, 0),
                30,
            )],
        )
        .unwrap();
        let slots = schedule_for_plan(&plan, &NotificationPrefs::default());
        let post: Vec<_> = slots
            .iter()
            .filter(|s| s.kind == SlotKind::PostActivity)
            .collect();
        assert_eq!(post.len(), 1);
        assert_eq!(post[0].fire_at, at(0, 8, 45));
        assert_eq!(post[0].workout_id.as_deref(), Some("w1"));
    }

    #[test]
    fn same_day_workouts_get_distinct_slots() {
        let plan = WeeklyPlan::from_workouts(
            1,
            monday(),
            vec![
                WorkoutSpec::upcoming(
                    "w1",
                    ActivityType::Walking,
                    Intensity::Light,
                    at(2, 7, 0),
                    20,
                ),
                WorkoutSpec::upcoming("w2", ActivityType::Yoga, Intensity::Light, at(2, 18, 0), 20),
            ],
        )
        .unwrap();
        let slots = schedule_for_plan(&plan, &NotificationPrefs::default());
        assert_eq!(slots.len(), 16);
        let ids: Vec<_> = slots
            .iter()
            .filter_map(|s| s.workout_id.as_deref())
            .collect();
        assert_eq!(ids, ["w1", "w2"]);
    }

    #[test]
    fn custom_times() {
        let prefs = NotificationPrefs {
            morning_time: NaiveTime::from_hms_opt(6, 30, 0).unwrap(),
            evening_time: NaiveTime::from_hms_opt(21, 15, 0).unwrap(),
        };
        let slots = schedule_for_plan(&WeeklyPlan::new(1, monday()), &prefs);
        assert_eq!(slots[0].fire_at, at(0, 6, 30));
        assert_eq!(slots[13].fire_at, at(6, 21, 15));
    }
}
