use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{PlanError, WeeklyPlan};

/// Completion rate at or above which the weekly goal counts as met.
pub const GOAL_MET_THRESHOLD: f64 = 0.8;

/// Recommended weekly exercise minutes.
pub const GUIDELINE_MINUTES_PER_WEEK: f64 = 150.0;

/// Minutes of completed workouts divided by minutes of all planned workouts.
pub fn compute_completion_rate(plan: &WeeklyPlan) -> Result<f64, PlanError> {
    let total: u64 = plan.workouts().iter().map(|w| w.duration_min as u64).sum();
    if plan.workouts().is_empty() || total == 0 {
        return Err(PlanError::UndefinedProgress);
    }
    let done: u64 = plan
        .workouts()
        .iter()
        .filter(|w| w.is_completed())
        .map(|w| w.duration_min as u64)
        .sum();
    Ok(done as f64 / total as f64)
}

/// Number of distinct categories (aerobic, strength, flexibility) in the plan, 0..=3.
pub fn plan_balance_score(plan: &WeeklyPlan) -> u8 {
    plan.workouts()
        .iter()
        .map(|w| w.activity.category())
        .collect::<BTreeSet<_>>()
        .len() as u8
}

pub fn unique_activity_count(plan: &WeeklyPlan) -> usize {
    plan.workouts()
        .iter()
        .map(|w| w.activity)
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Progression {
    RampUp,
    Maintain,
    RevisitBarriers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProgressionAdvice {
    pub progression: Progression,
    /// `None` for a week with nothing planned.
    pub completion_rate: Option<f64>,
    pub weekly_exercise_min: f64,
    pub goal_met: bool,
    pub meets_guideline: bool,
    pub rationale: String,
}

/// End-of-week recommendation. Call once the plan week is over.
pub fn propose_progression(plan: &WeeklyPlan, weekly_exercise_min: f64) -> ProgressionAdvice {
    let rate = compute_completion_rate(plan).ok();
    let goal_met = rate.is_some_and(|r| r >= GOAL_MET_THRESHOLD);
    let meets_guideline = weekly_exercise_min >= GUIDELINE_MINUTES_PER_WEEK;
    let (progression, rationale) = match (goal_met, meets_guideline) {
        (true, false) => (
            Progression::RampUp,
            format!(
                "plan goal met but {weekly_exercise_min:.0} min is below the {GUIDELINE_MINUTES_PER_WEEK:.0} min/week guideline; suggest longer sessions or a new activity type"
            ),
        ),
        (true, true) => (
            Progression::Maintain,
            format!("plan goal met and {weekly_exercise_min:.0} min meets the weekly guideline"),
        ),
        (false, _) => (
            Progression::RevisitBarriers,
            match rate {
                Some(r) => format!(
                    "completed {:.0}% of planned minutes; discuss barriers and revise the plan",
                    r * 100.0
                ),
                None => "no workouts were planned; discuss barriers and set a plan".to_string(),
            },
        ),
    };
    ProgressionAdvice {
        progression,
        completion_rate: rate,
        weekly_exercise_min,
        goal_met,
        meets_guideline,
        rationale,
    }
}
