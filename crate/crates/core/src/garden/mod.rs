//! The garden ambient display.
//!
//! A flower grows in 20% steps of weekly plan completion and fully blooms at 100%.
//! Completed weeks leave their flower in the garden; incomplete weeks start over.
//! Weeks 2, 3 and 4 add a persistent reward. Every completed workout draws a critter
//! whose kind, color and size encode the activity and its duration; critters reset
//! weekly. Once a week numbered 4 or later is completed the scene is frozen, except
//! for critters.

mod events;
mod scene;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{DisplayGroup, RecordClassification, WorkoutRecord, WorkoutSpec};

pub use events::{Garden, GardenEvent};
pub use scene::{CritterView, FlowerView, SceneDescriptor};

pub const MAX_STAGE: u8 = 5;
/// Week whose completion freezes the display.
pub const FINAL_WEEK: u32 = 4;

// Progress fractions come from integer minute ratios; this absorbs float noise such as
// 0.7999999999999999 without promoting a genuine 79.9% to stage 4.
const STAGE_EPSILON: f64 = 1e-9;

/// Flower stage reached at a given completion fraction: `floor(fraction * 100 / 20)`, capped at 5.
pub fn stage_for_fraction(fraction: f64) -> u8 {
    let raw = (fraction * MAX_STAGE as f64 + STAGE_EPSILON).floor();
    raw.clamp(0.0, MAX_STAGE as f64) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Reward {
    BirdOnBranch,
    Beehive,
    BirdAndBirdhouse,
}

impl Reward {
    /// Reward granted on entering `week`.
    pub fn for_week(week: u32) -> Option<Reward> {
        match week {
            2 => Some(Reward::BirdOnBranch),
            3 => Some(Reward::Beehive),
            4 => Some(Reward::BirdAndBirdhouse),
            _ => None,
        }
    }

    pub fn min_week(self) -> u32 {
        match self {
            Reward::BirdOnBranch => 2,
            Reward::Beehive => 3,
            Reward::BirdAndBirdhouse => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CritterKind {
    Bee,
    Butterfly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CritterColor {
    Bee,
    Red,
    Orange,
    Green,
    Yellow,
    Blue,
    Purple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CritterSize {
    Small,
    Medium,
    Large,
}

impl CritterSize {
    /// `< 15` small, `15..30` medium, `>= 30` large.
    pub fn for_minutes(minutes: u32) -> Self {
        match minutes {
            0..=14 => CritterSize::Small,
            15..=29 => CritterSize::Medium,
            _ => CritterSize::Large,
        }
    }
}

pub fn critter_look(group: DisplayGroup) -> (CritterKind, CritterColor) {
    match group {
        DisplayGroup::Walking => (CritterKind::Bee, CritterColor::Bee),
        DisplayGroup::Cardio => (CritterKind::Butterfly, CritterColor::Red),
        DisplayGroup::Strength => (CritterKind::Butterfly, CritterColor::Orange),
        DisplayGroup::TeamSports => (CritterKind::Butterfly, CritterColor::Green),
        DisplayGroup::FlexibilityDance => (CritterKind::Butterfly, CritterColor::Yellow),
        DisplayGroup::OutdoorRecreation => (CritterKind::Butterfly, CritterColor::Blue),
        DisplayGroup::Misc => (CritterKind::Butterfly, CritterColor::Purple),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Critter {
    pub kind: CritterKind,
    pub color: CritterColor,
    pub size: CritterSize,
    pub workout_id: String,
}

impl Critter {
    pub fn new(group: DisplayGroup, minutes: u32, workout_id: impl Into<String>) -> Self {
        let (kind, color) = critter_look(group);
        Self {
            kind,
            color,
            size: CritterSize::for_minutes(minutes),
            workout_id: workout_id.into(),
        }
    }
}

/// A completed workout that earns a critter.
#[derive(Debug, Clone, Copy)]
pub enum CritterSource<'a> {
    Planned(&'a WorkoutSpec),
    Bonus(&'a WorkoutRecord),
}

impl CritterSource<'_> {
    fn critter(&self) -> Result<Critter, GardenError> {
        match self {
            CritterSource::Planned(w) => {
                if !w.is_completed() {
                    return Err(GardenError::NotCompleted(w.id.clone()));
                }
                Ok(Critter::new(
                    w.activity.display_group(),
                    w.duration_min,
                    w.id.clone(),
                ))
            }
            CritterSource::Bonus(r) => {
                if r.classification != RecordClassification::Bonus {
                    return Err(GardenError::NotCompleted(r.id.clone()));
                }
                Ok(Critter::new(
                    r.activity.display_group(),
                    r.duration_min(),
                    r.id.clone(),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GrowthEvent {
    pub week_number: u32,
    pub stage: u8,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GardenError {
    #[error("garden display is frozen")]
    Frozen,
    #[error("progress fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("workout `{0}` already has a critter")]
    DuplicateCritter(String),
    #[error("workout `{0}` is not completed")]
    NotCompleted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GardenState {
    pub week_number: u32,
    pub flower_stage: u8,
    pub persisted_flowers: u32,
    pub rewards: BTreeSet<Reward>,
    /// Ordered by workout id so the state does not depend on completion order.
    pub critters: Vec<Critter>,
    pub frozen: bool,
}

impl Default for GardenState {
    fn default() -> Self {
        Self {
            week_number: 1,
            flower_stage: 0,
            persisted_flowers: 0,
            rewards: BTreeSet::new(),
            critters: Vec::new(),
            frozen: false,
        }
    }
}

impl GardenState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Grows the current flower to the stage reached by `new_fraction`, emitting one
    /// event per stage crossed. A fraction below the current stage changes nothing.
    pub fn apply_progress(
        &mut self,
        old_fraction: f64,
        new_fraction: f64,
    ) -> Result<Vec<GrowthEvent>, GardenError> {
        for f in [old_fraction, new_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(GardenError::InvalidFraction(f));
            }
        }
        if self.frozen {
            return Err(GardenError::Frozen);
        }
        let target = stage_for_fraction(new_fraction);
        let events = (self.flower_stage + 1..=target)
            .map(|stage| GrowthEvent {
                week_number: self.week_number,
                stage,
            })
            .collect();
        self.flower_stage = self.flower_stage.max(target);
        Ok(events)
    }

    pub fn spawn_critter(&mut self, source: CritterSource<'_>) -> Result<&Critter, GardenError> {
        let critter = source.critter()?;
        self.insert_critter(critter)
    }

    fn insert_critter(&mut self, critter: Critter) -> Result<&Critter, GardenError> {
        match self
            .critters
            .binary_search_by(|c| c.workout_id.cmp(&critter.workout_id))
        {
            Ok(_) => Err(GardenError::DuplicateCritter(critter.workout_id)),
            Err(pos) => {
                self.critters.insert(pos, critter);
                Ok(&self.critters[pos])
            }
        }
    }

    /// Closes the current week. Call exactly once per week boundary.
    pub fn advance_week(&mut self, plan_completed: bool) {
        let closing = self.week_number;
        if !self.frozen {
            if plan_completed {
                self.persisted_flowers += 1;
            }
            self.flower_stage = 0;
            if plan_completed && closing >= FINAL_WEEK {
                self.frozen = true;
            }
        }
        self.critters.clear();
        self.week_number += 1;
        if !self.frozen {
            if let Some(reward) = Reward::for_week(self.week_number) {
                self.rewards.insert(reward);
            }
        }
    }

    pub fn render_descriptor(&self) -> SceneDescriptor {
        SceneDescriptor::from_state(self)
    }

    /// Structural invariants of a garden state; empty when the state is well formed.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.week_number < 1 {
            out.push("weekNumber >= 1".to_string());
        }
        if self.flower_stage > MAX_STAGE {
            out.push(format!("flowerStage {} > {MAX_STAGE}", self.flower_stage));
        }
        for r in &self.rewards {
            if self.week_number < r.min_week() {
                out.push(format!("{r:?} not reachable in week {}", self.week_number));
            }
        }
        if self
            .critters
            .windows(2)
            .any(|w| w[0].workout_id >= w[1].workout_id)
        {
            out.push("critters not unique and ordered by workout id".to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ActivityType, CompletionSource, Intensity, WorkoutStatus};
    use chrono::NaiveDate;

    fn done(id: &str, activity: ActivityType, minutes: u32) -> WorkoutSpec {
        let start = NaiveDate::from_ymd_opt(2025, 5, 5)
            .unwrap()
            .and_hms_opt(8, 0, 0)
            .unwrap();
        let mut w = WorkoutSpec::upcoming(id, activity, Intensity::Moderate, start, minutes);
        w.status = WorkoutStatus::Completed;
        w.completion_source = CompletionSource::Manual;
        w
    }

    #[test]
    fn thirty_to_forty_grows() {
        let mut g = GardenState::new();
        g.flower_stage = 1;
        let events = g.apply_progress(0.30, 0.40).unwrap();
        assert_eq!(
            events,
            vec![GrowthEvent {
                week_number: 1,
                stage: 2
            }]
        );
        assert_eq!(g.flower_stage, 2);
    }

    #[test]
    fn twenty_to_thirty_does_not_grow() {
        let mut g = GardenState::new();
        g.flower_stage = 1;
        assert!(g.apply_progress(0.20, 0.30).unwrap().is_empty());
        assert_eq!(g.flower_stage, 1);
    }

    #[test]
    fn zero_to_full_blooms_in_five_steps() {
        let mut g = GardenState::new();
        let events = g.apply_progress(0.0, 1.0).unwrap();
        assert_eq!(events.len(), 5);
        assert_eq!(g.flower_stage, MAX_STAGE);
    }

    #[test]
    fn stage_thresholds_are_inclusive() {
        assert_eq!(stage_for_fraction(0.0), 0);
        assert_eq!(stage_for_fraction(0.1999), 0);
        assert_eq!(stage_for_fraction(0.2), 1);
        assert_eq!(stage_for_fraction(0.4), 2);
        assert_eq!(stage_for_fraction(4.0 / 5.0), 4);
        assert_eq!(stage_for_fraction(0.7 + 0.1), 4);
        assert_eq!(stage_for_fraction(0.799), 3);
        assert_eq!(stage_for_fraction(1.0), 5);
    }

    #[test]
    fn regression_never_shrinks_the_flower() {
        let mut g = GardenState::new();
        g.apply_progress(0.0, 0.6).unwrap();
        assert!(g.apply_progress(0.6, 0.2).unwrap().is_empty());
        assert_eq!(g.flower_stage, 3);
    }

    #[test]
    fn out_of_range_fraction_rejected() {
        let mut g = GardenState::new();
        assert_eq!(
            g.apply_progress(0.0, 1.2),
            Err(GardenError::InvalidFraction(1.2))
        );
        assert_eq!(
            g.apply_progress(-0.1, 0.5),
            Err(GardenError::InvalidFraction(-0.1))
        );
    }

    #[test]
    fn critter_examples() {
        let mut g = GardenState::new();
        let c = g
            .spawn_critter(CritterSource::Planned(&done(
                "a",
                ActivityType::Walking,
                20,
            )))
            .unwrap()
            .clone();
        assert_eq!(
            (c.kind, c.color, c.size),
            (CritterKind::Bee, CritterColor::Bee, CritterSize::Medium)
        );
        let c = g
            .spawn_critter(CritterSource::Planned(&done(
                "b",
                ActivityType::Strength,
                45,
            )))
            .unwrap()
            .clone();
        assert_eq!(
            (c.kind, c.color, c.size),
            (
                CritterKind::Butterfly,
                CritterColor::Orange,
                CritterSize::Large
            )
        );
        let c = g
            .spawn_critter(CritterSource::Planned(&done(
                "c",
                ActivityType::Stretching,
                10,
            )))
            .unwrap()
            .clone();
        assert_eq!(
            (c.kind, c.color, c.size),
            (
                CritterKind::Butterfly,
                CritterColor::Yellow,
                CritterSize::Small
            )
        );
    }

    #[test]
    fn one_critter_per_workout() {
        let mut g = GardenState::new();
        let w = done("a", ActivityType::Walking, 20);
        g.spawn_critter(CritterSource::Planned(&w)).unwrap();
        assert_eq!(
            g.spawn_critter(CritterSource::Planned(&w)).unwrap_err(),
            GardenError::DuplicateCritter("a".into())
        );
    }

    #[test]
    fn uncompleted_workout_gets_no_critter() {
        let mut g = GardenState::new();
        let mut w = done("a", ActivityType::Walking, 20);
        w.status = WorkoutStatus::Upcoming;
        w.completion_source = CompletionSource::None;
        assert_eq!(
            g.spawn_critter(CritterSource::Planned(&w)).unwrap_err(),
            GardenError::NotCompleted("a".into())
        );
    }

    #[test]
    fn size_boundaries() {
        assert_eq!(CritterSize::for_minutes(14), CritterSize::Small);
        assert_eq!(CritterSize::for_minutes(15), CritterSize::Medium);
        assert_eq!(CritterSize::for_minutes(29), CritterSize::Medium);
        assert_eq!(CritterSize::for_minutes(30), CritterSize::Large);
    }

    #[test]
    fn completed_week_persists_flower() {
        let mut g = GardenState::new();
        g.apply_progress(0.0, 1.0).unwrap();
        g.spawn_critter(CritterSource::Planned(&done(
            "a",
            ActivityType::Walking,
            20,
        )))
        .unwrap();
        g.advance_week(true);
        assert_eq!(g.persisted_flowers, 1);
        assert_eq!(g.flower_stage, 0);
        assert!(g.critters.is_empty());
        assert_eq!(g.week_number, 2);
        assert!(g.rewards.contains(&Reward::BirdOnBranch));
    }

    #[test]
    fn incomplete_week_starts_over() {
        let mut g = GardenState::new();
        g.apply_progress(0.0, 0.6).unwrap();
        g.advance_week(false);
        assert_eq!(g.persisted_flowers, 0);
        assert_eq!(g.flower_stage, 0);
    }

    #[test]
    fn entering_week_three_adds_beehive() {
        let mut g = GardenState::new();
        g.advance_week(false);
        g.advance_week(false);
        assert_eq!(g.week_number, 3);
        assert!(g.rewards.contains(&Reward::Beehive));
        assert!(g.invariant_violations().is_empty());
    }

    #[test]
    fn frozen_after_final_week_but_critters_continue() {
        let mut g = GardenState::new();
        for _ in 0..3 {
            g.advance_week(true);
        }
        g.apply_progress(0.0, 1.0).unwrap();
        g.advance_week(true);
        assert!(g.frozen);
        let snapshot = (g.flower_stage, g.persisted_flowers, g.rewards.clone());
        assert_eq!(g.apply_progress(0.0, 0.5), Err(GardenError::Frozen));
        g.spawn_critter(CritterSource::Planned(&done("x", ActivityType::Soccer, 60)))
            .unwrap();
        assert_eq!(g.critters.len(), 1);
        g.advance_week(true);
        assert_eq!(
            (g.flower_stage, g.persisted_flowers, g.rewards.clone()),
            snapshot
        );
        assert!(g.critters.is_empty());
    }

    #[test]
    fn incomplete_final_week_does_not_freeze() {
        let mut g = GardenState::new();
        for _ in 0..3 {
            g.advance_week(true);
        }
        g.advance_week(false);
        assert!(!g.frozen);
        g.advance_week(true);
        assert!(g.frozen);
    }
}
