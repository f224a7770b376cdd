use std::collections::BTreeSet;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    schedule_for_plan, ContentClass, GeneratedBy, NotificationPrefs, NotificationSlot, SlotKind,
};
use crate::plan::WeeklyPlan;
use crate::safety::SafetyOutcome;

/// Identity of a slot. Field order is the firing order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlotKey {
    pub fire_at: NaiveDateTime,
    pub kind: SlotKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workout_id: Option<String>,
}

impl SlotKey {
    pub fn slot(&self) -> NotificationSlot {
        NotificationSlot {
            kind: self.kind,
            fire_at: self.fire_at,
            workout_id: self.workout_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationRecord {
    pub slot: NotificationSlot,
    pub content_class: ContentClass,
    pub text: String,
    pub generated_by: GeneratedBy,
    pub delivered_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_outcome: Option<SafetyOutcome>,
}

/// A slot whose time has come, with the week of the plan that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DueSlot {
    pub slot: NotificationSlot,
    pub week_start: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PendingSlot {
    key: SlotKey,
    /// Week of the plan that produced the slot; follow-ups may fire after it ends.
    week_start: NaiveDate,
}

/// Pending and fired slots for one user.
///
/// A slot fires at most once: keys move from `pending` to `fired` in
/// [`NotificationScheduler::take_due`] and are never re-added.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationScheduler {
    pending: Vec<PendingSlot>,
    fired: BTreeSet<SlotKey>,
    records: Vec<NotificationRecord>,
}

impl NotificationScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Brings the pending slots of `plan`'s week in line with the plan.
    ///
    /// Slots no longer produced by the plan are cancelled. New slots whose
    /// time has already passed are not scheduled; slots that were pending
    /// before and are now due stay pending so the next tick fires them.
    pub fn resync(
        &mut self,
        plan: &WeeklyPlan,
        prefs: &NotificationPrefs,
        now_local: NaiveDateTime,
    ) {
        let week = plan.week_start;
        let desired: BTreeSet<SlotKey> = schedule_for_plan(plan, prefs)
            .iter()
            .map(NotificationSlot::key)
            .collect();
        let before = self.pending.len();
        self.pending
            .retain(|p| p.week_start != week || desired.contains(&p.key));
        let cancelled = before - self.pending.len();
        let known: BTreeSet<SlotKey> = self.pending.iter().map(|p| p.key.clone()).collect();
        for key in desired {
            if key.fire_at > now_local && !known.contains(&key) && !self.fired.contains(&key) {
                self.pending.push(PendingSlot {
                    key,
                    week_start: week,
                });
            }
        }
        self.pending.sort_by(|a, b| a.key.cmp(&b.key));
        if cancelled > 0 {
            tracing::debug!(%week, cancelled, "notification slots cancelled by plan change");
        }
    }

    /// Removes every pending slot whose time has come, in firing order.
    pub fn take_due(&mut self, now_local: NaiveDateTime) -> Vec<DueSlot> {
        let split = self.pending.partition_point(|p| p.key.fire_at <= now_local);
        self.pending
            .drain(..split)
            .map(|p| {
                self.fired.insert(p.key.clone());
                DueSlot {
                    slot: p.key.slot(),
                    week_start: p.week_start,
                }
            })
            .collect()
    }

    pub fn pending(&self) -> Vec<NotificationSlot> {
        self.pending.iter().map(|p| p.key.slot()).collect()
    }

    pub fn pending_for_week(&self, week_start: NaiveDate) -> Vec<NotificationSlot> {
        self.pending
            .iter()
            .filter(|p| p.week_start == week_start)
            .map(|p| p.key.slot())
            .collect()
    }

    pub fn has_fired(&self, key: &SlotKey) -> bool {
        self.fired.contains(key)
    }

    pub fn record(&mut self, record: NotificationRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[NotificationRecord] {
        &self.records
    }

    /// Texts of the last `n` notifications, oldest first.
    pub fn recent_texts(&self, n: usize) -> Vec<String> {
        let start = self.records.len().saturating_sub(n);
        self.records[start..]
            .iter()
            .map(|r| r.text.clone())
            .collect()
    }
}
