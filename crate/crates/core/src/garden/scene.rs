use serde::{Deserialize, Serialize};

use super::{CritterColor, CritterKind, CritterSize, GardenState, Reward, MAX_STAGE};

/// Serializable description of the garden scene, consumed by clients and the
/// wallpaper renderer. A pure function of [`GardenState`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneDescriptor {
    pub week_number: u32,
    pub frozen: bool,
    pub flowers: Vec<FlowerView>,
    pub rewards: Vec<Reward>,
    pub critters: Vec<CritterView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowerView {
    pub slot: u32,
    pub stage: u8,
    pub bloomed: bool,
    pub growing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CritterView {
    pub kind: CritterKind,
    pub color: CritterColor,
    pub size: CritterSize,
    pub workout_id: String,
}

impl SceneDescriptor {
    pub fn from_state(state: &GardenState) -> Self {
        let mut flowers: Vec<FlowerView> = (0..state.persisted_flowers)
            .map(|slot| FlowerView {
                slot,
                stage: MAX_STAGE,
                bloomed: true,
                growing: false,
            })
            .collect();
        // a frozen garden shows its final screen, with no new flower started
        if !state.frozen {
            flowers.push(FlowerView {
                slot: state.persisted_flowers,
                stage: state.flower_stage,
                bloomed: state.flower_stage == MAX_STAGE,
                growing: true,
            });
        }
        SceneDescriptor {
            week_number: state.week_number,
            frozen: state.frozen,
            flowers,
            rewards: state.rewards.iter().copied().collect(),
            critters: state
                .critters
                .iter()
                .map(|c| CritterView {
                    kind: c.kind,
                    color: c.color,
                    size: c.size,
                    workout_id: c.workout_id.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_state_shows_one_seedling() {
        let d = GardenState::new().render_descriptor();
        assert_eq!(
            d.flowers,
            vec![FlowerView {
                slot: 0,
                stage: 0,
                bloomed: false,
                growing: true
            }]
        );
        assert!(d.critters.is_empty());
        assert!(d.rewards.is_empty());
    }

    #[test]
    fn rendering_is_byte_stable() {
        let mut g = GardenState::new();
        g.apply_progress(0.0, 0.6).unwrap();
        g.advance_week(true);
        assert_eq!(
            g.render_descriptor().to_json(),
            g.render_descriptor().to_json()
        );
    }

    #[test]
    fn json_field_names() {
        let v = serde_json::to_value(GardenState::new().render_descriptor()).unwrap();
        assert_eq!(v["weekNumber"], 1);
        assert_eq!(v["flowers"][0]["stage"], 0);
    }
}
