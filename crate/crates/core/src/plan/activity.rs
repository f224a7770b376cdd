use std::fmt;

use serde::{Deserialize, Serialize};

/// Physical-activity category used for plan balance scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActivityCategory {
    Aerobic,
    Strength,
    Flexibility,
}

impl ActivityCategory {
    pub const ALL: [ActivityCategory; 3] = [Self::Aerobic, Self::Strength, Self::Flexibility];
}

/// Visual grouping that drives critter kind and color in the garden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DisplayGroup {
    Walking,
    Cardio,
    Strength,
    TeamSports,
    FlexibilityDance,
    OutdoorRecreation,
    Misc,
}

impl DisplayGroup {
    pub const ALL: [DisplayGroup; 7] = [
        Self::Walking,
        Self::Cardio,
        Self::Strength,
        Self::TeamSports,
        Self::FlexibilityDance,
        Self::OutdoorRecreation,
        Self::Misc,
    ];
}

/// The closed catalog of activity types a plan may contain.
///
/// Each variant maps to exactly one [`ActivityCategory`] and one [`DisplayGroup`];
/// `Walking` is the only member of the walking display group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActivityType {
    Walking,
    Running,
    Cycling,
    Swimming,
    Elliptical,
    Rowing,
    Hiit,
    Strength,
    Pilates,
    Yoga,
    Stretching,
    Dance,
    Basketball,
    Soccer,
    Tennis,
    Volleyball,
    Hiking,
    Kayaking,
    Climbing,
    Other,
}

impl ActivityType {
    pub const ALL: [ActivityType; 20] = [
        Self::Walking,
        Self::Running,
        Self::Cycling,
        Self::Swimming,
        Self::Elliptical,
        Self::Rowing,
        Self::Hiit,
        Self::Strength,
        Self::Pilates,
        Self::Yoga,
        Self::Stretching,
        Self::Dance,
        Self::Basketball,
        Self::Soccer,
        Self::Tennis,
        Self::Volleyball,
        Self::Hiking,
        Self::Kayaking,
        Self::Climbing,
        Self::Other,
    ];

    pub fn category(self) -> ActivityCategory {
        use ActivityType::*;
        match self {
            Walking | Running | Cycling | Swimming | Elliptical | Rowing | Hiit | Dance
            | Basketball | Soccer | Tennis | Volleyball | Hiking | Kayaking | Other => {
                ActivityCategory::Aerobic
            }
            Strength | Climbing => ActivityCategory::Strength,
            Pilates | Yoga | Stretching => ActivityCategory::Flexibility,
        }
    }

    pub fn display_group(self) -> DisplayGroup {
        use ActivityType::*;
        match self {
            Walking => DisplayGroup::Walking,
            Running | Cycling | Swimming | Elliptical | Rowing | Hiit => DisplayGroup::Cardio,
            Strength => DisplayGroup::Strength,
            Basketball | Soccer | Tennis | Volleyball => DisplayGroup::TeamSports,
            Pilates | Yoga | Stretching | Dance => DisplayGroup::FlexibilityDance,
            Hiking | Kayaking | Climbing => DisplayGroup::OutdoorRecreation,
            Other => DisplayGroup::Misc,
        }
    }

    /// Wire identifier, e.g. `"walking"`.
    pub fn as_str(self) -> &'static str {
        use ActivityType::*;
        match self {
            Walking => "walking",
            Running => "running",
            Cycling => "cycling",
            Swimming => "swimming",
            Elliptical => "elliptical",
            Rowing => "rowing",
            Hiit => "hiit",
            Strength => "strength",
            Pilates => "pilates",
            Yoga => "yoga",
            Stretching => "stretching",
            Dance => "dance",
            Basketball => "basketball",
            Soccer => "soccer",
            Tennis => "tennis",
            Volleyball => "volleyball",
            Hiking => "hiking",
            Kayaking => "kayaking",
            Climbing => "climbing",
            Other => "other",
        }
    }

    /// Short noun used in notification text ("walk at 08:00").
    pub fn noun(self) -> &'static str {
        use ActivityType::*;
        match self {
            Walking => "walk",
            Running => "run",
            Cycling => "bike ride",
            Swimming => "swim",
            Elliptical => "elliptical session",
            Rowing => "row",
            Hiit => "HIIT workout",
            Strength => "strength session",
            Pilates => "pilates session",
            Yoga => "yoga session",
            Stretching => "stretch",
            Dance => "dance session",
            Basketball => "basketball game",
            Soccer => "soccer game",
            Tennis => "tennis match",
            Volleyball => "volleyball game",
            Hiking => "hike",
            Kayaking => "kayak outing",
            Climbing => "climb",
            Other => "workout",
        }
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
