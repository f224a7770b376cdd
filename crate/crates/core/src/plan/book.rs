use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{LinkDecision, PlanError, WeeklyPlan, WorkoutRecord};
use crate::time::week_start_of;

/// All of one user's weekly plans, keyed by week start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanBook {
    plans: BTreeMap<NaiveDate, WeeklyPlan>,
}

impl PlanBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, week_start: NaiveDate) -> Option<&WeeklyPlan> {
        self.plans.get(&week_start)
    }

    pub fn get_mut(&mut self, week_start: NaiveDate) -> Option<&mut WeeklyPlan> {
        self.plans.get_mut(&week_start)
    }

    /// The plan whose week contains `at`.
    pub fn plan_at(&self, at: NaiveDateTime) -> Option<&WeeklyPlan> {
        self.plans.get(&week_start_of(at.date()))
    }

    pub fn plan_at_mut(&mut self, at: NaiveDateTime) -> Option<&mut WeeklyPlan> {
        self.plans.get_mut(&week_start_of(at.date()))
    }

    pub fn latest(&self) -> Option<&WeeklyPlan> {
        self.plans.values().next_back()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &WeeklyPlan> {
        self.plans.values()
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    /// Stores a plan, returning the one it replaced for the same week, if any.
    pub fn insert(&mut self, plan: WeeklyPlan) -> Option<WeeklyPlan> {
        self.plans.insert(plan.week_start, plan)
    }

    /// Routes a record to the plan of the week it started in.
    pub fn link_workout(&mut self, record: &mut WorkoutRecord) -> Result<LinkDecision, PlanError> {
        let week = week_start_of(record.start.date());
        match self.plans.get_mut(&week) {
            Some(plan) => plan.link_workout(record),
            None => Err(PlanError::NoPlan(week)),
        }
    }
}
