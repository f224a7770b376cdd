use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{
    CompletionSource, PlanError, RecordClassification, WeeklyPlan, WorkoutRecord, WorkoutStatus,
};
use crate::time::week_start_of;

/// Half-width of the window around a planned start within which a record may link.
pub const LINK_WINDOW_MINUTES: i64 = 120;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "camelCase")]
pub enum LinkDecision {
    Linked {
        #[serde(rename = "workoutId")]
        workout_id: String,
    },
    Bonus,
}

impl WeeklyPlan {
    /// Links an incoming workout record to the closest eligible planned workout, or logs
    /// it as a bonus activity.
    ///
    /// Eligible: same activity type, same calendar day, not yet completed, and a start
    /// within [`LINK_WINDOW_MINUTES`] of the planned start. Ties go to the smaller
    /// |Δstart|, then the earlier planned start. Presenting a record this plan has
    /// already seen returns the earlier decision unchanged.
    pub fn link_workout(&mut self, record: &mut WorkoutRecord) -> Result<LinkDecision, PlanError> {
        if record.end <= record.start {
            return Err(PlanError::InvalidRecord {
                id: record.id.clone(),
                reason: "end must be after start".into(),
            });
        }
        if !self.covers(record.start) {
            return Err(PlanError::NoPlan(week_start_of(record.start.date())));
        }

        if let Some(w) = self
            .workouts
            .iter()
            .find(|w| w.linked_record_id.as_deref() == Some(record.id.as_str()))
        {
            record.classification = RecordClassification::Linked;
            return Ok(LinkDecision::Linked {
                workout_id: w.id.clone(),
            });
        }
        if self.bonus.iter().any(|b| b.id == record.id) {
            record.classification = RecordClassification::Bonus;
            return Ok(LinkDecision::Bonus);
        }
        if record.classification != RecordClassification::Unlinked {
            return Err(PlanError::InvalidRecord {
                id: record.id.clone(),
                reason: "record was classified against a different plan".into(),
            });
        }

        let window = Duration::minutes(LINK_WINDOW_MINUTES);
        let best = self
            .workouts
            .iter()
            .enumerate()
            .filter(|(_, w)| {
                w.activity == record.activity
                    && !w.is_completed()
                    && w.scheduled_start.date() == record.start.date()
                    && (record.start - w.scheduled_start).abs() <= window
            })
            .min_by(|(_, a), (_, b)| {
                let da = (record.start - a.scheduled_start).abs();
                let db = (record.start - b.scheduled_start).abs();
                da.cmp(&db)
                    .then_with(|| a.scheduled_start.cmp(&b.scheduled_start))
                    .then_with(|| a.id.cmp(&b.id))
            })
            .map(|(i, _)| i);

        match best {
            Some(idx) => {
                let w = &mut self.workouts[idx];
                w.status = WorkoutStatus::Completed;
                w.completion_source = CompletionSource::Linked;
                w.linked_record_id = Some(record.id.clone());
                record.classification = RecordClassification::Linked;
                Ok(LinkDecision::Linked {
                    workout_id: w.id.clone(),
                })
            }
            None => {
                record.classification = RecordClassification::Bonus;
                self.bonus.push(record.clone());
                Ok(LinkDecision::Bonus)
            }
        }
    }
}
