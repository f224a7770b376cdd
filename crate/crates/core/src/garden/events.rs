use serde::{Deserialize, Serialize};

use super::{Critter, CritterSource, GardenError, GardenState, GrowthEvent};

/// Everything that changes a garden. The state is a left fold over these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum GardenEvent {
    #[serde(rename_all = "camelCase")]
    Progress {
        old_fraction: f64,
        new_fraction: f64,
    },
    #[serde(rename_all = "camelCase")]
    CritterSpawned { critter: Critter },
    #[serde(rename_all = "camelCase")]
    WeekAdvanced { plan_completed: bool },
}

/// Event-sourced garden: the current state plus the log that produced it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Garden {
    state: GardenState,
    events: Vec<GardenEvent>,
}

impl Garden {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &GardenState {
        &self.state
    }

    pub fn events(&self) -> &[GardenEvent] {
        &self.events
    }

    /// Rebuilds a garden from its log.
    pub fn replay(events: &[GardenEvent]) -> Result<Self, GardenError> {
        let mut garden = Garden::new();
        for e in events {
            garden.apply(e.clone())?;
        }
        Ok(garden)
    }

    /// Applies an event and appends it to the log if it succeeded.
    pub fn apply(&mut self, event: GardenEvent) -> Result<Vec<GrowthEvent>, GardenError> {
        let growth = match &event {
            GardenEvent::Progress {
                old_fraction,
                new_fraction,
            } => self.state.apply_progress(*old_fraction, *new_fraction)?,
            GardenEvent::CritterSpawned { critter } => {
                self.state.insert_critter(critter.clone())?;
                Vec::new()
            }
            GardenEvent::WeekAdvanced { plan_completed } => {
                self.state.advance_week(*plan_completed);
                Vec::new()
            }
        };
        self.events.push(event);
        Ok(growth)
    }

    pub fn apply_progress(
        &mut self,
        old_fraction: f64,
        new_fraction: f64,
    ) -> Result<Vec<GrowthEvent>, GardenError> {
        self.apply(GardenEvent::Progress {
            old_fraction,
            new_fraction,
        })
    }

    pub fn spawn_critter(&mut self, source: CritterSource<'_>) -> Result<Critter, GardenError> {
        let critter = source.critter()?;
        self.apply(GardenEvent::CritterSpawned {
            critter: critter.clone(),
        })?;
        Ok(critter)
    }

    pub fn advance_week(&mut self, plan_completed: bool) {
        self.apply(GardenEvent::WeekAdvanced { plan_completed })
            .expect("week advance is infallible");
    }
}
