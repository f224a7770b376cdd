use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::tools::ToolName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    Onboarding,
    Checkin,
    Atwill,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Onboarding, Mode::Checkin, Mode::Atwill];

    /// Program order; transitions only move forward through this list.
    pub fn states(self) -> &'static [StateId] {
        use StateId::*;
        match self {
            Mode::Onboarding => &[
                Intro,
                MotivationHistory,
                BarriersResources,
                GoalSetting,
                WrapUp,
            ],
            Mode::Checkin => &[
                ProgressReview,
                BarrierDiscussion,
                PlanRevisionOrProgression,
                Commitment,
                WrapUp,
            ],
            Mode::Atwill => &[Chat],
        }
    }

    pub fn first_state(self) -> StateId {
        self.states()[0]
    }

    pub fn uses_state_chain(self) -> bool {
        self != Mode::Atwill
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Onboarding => "onboarding",
            Mode::Checkin => "checkin",
            Mode::Atwill => "atwill",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == normalize(s))
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StateId {
    Intro,
    MotivationHistory,
    BarriersResources,
    GoalSetting,
    ProgressReview,
    BarrierDiscussion,
    PlanRevisionOrProgression,
    Commitment,
    WrapUp,
    Chat,
}

impl StateId {
    pub const ALL: [StateId; 10] = [
        StateId::Intro,
        StateId::MotivationHistory,
        StateId::BarriersResources,
        StateId::GoalSetting,
        StateId::ProgressReview,
        StateId::BarrierDiscussion,
        StateId::PlanRevisionOrProgression,
        StateId::Commitment,
        StateId::WrapUp,
        StateId::Chat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StateId::Intro => "intro",
            StateId::MotivationHistory => "motivationHistory",
            StateId::BarriersResources => "barriersResources",
            StateId::GoalSetting => "goalSetting",
            StateId::ProgressReview => "progressReview",
            StateId::BarrierDiscussion => "barrierDiscussion",
            StateId::PlanRevisionOrProgression => "planRevisionOrProgression",
            StateId::Commitment => "commitment",
            StateId::WrapUp => "wrapUp",
            StateId::Chat => "chat",
        }
    }

    /// Accepts `goalSetting`, `goal_setting`, `Goal Setting` and similar spellings.
    pub fn parse_loose(text: &str) -> Option<StateId> {
        let wanted = normalize(text);
        StateId::ALL
            .into_iter()
            .find(|s| normalize(s.as_str()) == wanted)
    }

    /// States in which the plan is (re)generated; leaving them requires a plan.
    pub fn is_goal_setting(self) -> bool {
        matches!(
            self,
            StateId::GoalSetting | StateId::PlanRevisionOrProgression
        )
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Gate {
    PlanGenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DialogueState {
    pub mode: Mode,
    pub state_id: StateId,
    pub allowed_tools: BTreeSet<ToolName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advance_gate: Option<Gate>,
}

impl DialogueState {
    pub fn new(mode: Mode, state_id: StateId) -> Self {
        debug_assert!(
            mode.states().contains(&state_id),
            "{state_id} is not a {mode} state"
        );
        let mut allowed_tools = BTreeSet::from([ToolName::QueryHealthData]);
        if mode == Mode::Atwill {
            allowed_tools.extend([ToolName::AddWorkout, ToolName::DeleteWorkout]);
        } else if state_id.is_goal_setting() {
            allowed_tools.insert(ToolName::GeneratePlan);
        }
        let advance_gate =
            (mode != Mode::Atwill && state_id.is_goal_setting()).then_some(Gate::PlanGenerated);
        Self {
            mode,
            state_id,
            allowed_tools,
            advance_gate,
        }
    }

    pub fn allows(&self, tool: ToolName) -> bool {
        self.allowed_tools.contains(&tool)
    }
}

/// Current state followed by every later state of the mode.
pub fn legal_targets(mode: Mode, current: StateId) -> &'static [StateId] {
    let states = mode.states();
    let idx = states.iter().position(|s| *s == current).unwrap_or(0);
    &states[idx..]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    pub from: StateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed: Option<StateId>,
    pub to: StateId,
    /// The proposal was cut short at a goal-setting state with no plan yet.
    pub gate_held: bool,
}

/// Applies the forward-only rule and the plan gate to a proposed next state.
/// Illegal or missing proposals keep the current state.
pub fn resolve_transition(
    mode: Mode,
    current: StateId,
    proposed: Option<StateId>,
    plan_generated: bool,
) -> Transition {
    let legal = legal_targets(mode, current);
    let target = proposed.filter(|p| legal.contains(p)).unwrap_or(current);
    let target_idx = legal
        .iter()
        .position(|s| *s == target)
        .expect("target is legal");
    let blocking = legal[..target_idx]
        .iter()
        .find(|s| s.is_goal_setting() && !plan_generated)
        .copied();
    Transition {
        from: current,
        proposed,
        to: blocking.unwrap_or(target),
        gate_held: blocking.is_some(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_states() {
        assert_eq!(Mode::Onboarding.first_state(), StateId::Intro);
        assert_eq!(Mode::Checkin.first_state(), StateId::ProgressReview);
        assert_eq!(Mode::Atwill.states(), &[StateId::Chat]);
    }

    #[test]
    fn tool_sets() {
        let atwill = DialogueState::new(Mode::Atwill, StateId::Chat);
        assert!(atwill.allows(ToolName::AddWorkout) && atwill.allows(ToolName::DeleteWorkout));
        assert!(!atwill.allows(ToolName::GeneratePlan));
        assert_eq!(atwill.advance_gate, None);
        let goal = DialogueState::new(Mode::Onboarding, StateId::GoalSetting);
        assert!(goal.allows(ToolName::GeneratePlan) && !goal.allows(ToolName::AddWorkout));
        assert_eq!(goal.advance_gate, Some(Gate::PlanGenerated));
        let intro = DialogueState::new(Mode::Onboarding, StateId::Intro);
        assert_eq!(
            intro.allowed_tools,
            BTreeSet::from([ToolName::QueryHealthData])
        );
        let rev = DialogueState::new(Mode::Checkin, StateId::PlanRevisionOrProgression);
        assert_eq!(rev.advance_gate, Some(Gate::PlanGenerated));
    }

    #[test]
    fn gate_holds_goal_setting() {
        let t = resolve_transition(
            Mode::Onboarding,
            StateId::GoalSetting,
            Some(StateId::WrapUp),
            false,
        );
        assert_eq!((t.to, t.gate_held), (StateId::GoalSetting, true));
        let t = resolve_transition(
            Mode::Onboarding,
            StateId::GoalSetting,
            Some(StateId::WrapUp),
            true,
        );
        assert_eq!((t.to, t.gate_held), (StateId::WrapUp, false));
        // skipping over goal setting lands on it
        let t = resolve_transition(
            Mode::Onboarding,
            StateId::Intro,
            Some(StateId::WrapUp),
            false,
        );
        assert_eq!(t.to, StateId::GoalSetting);
        let t = resolve_transition(
            Mode::Onboarding,
            StateId::Intro,
            Some(StateId::BarriersResources),
            false,
        );
        assert_eq!(t.to, StateId::BarriersResources);
    }

    #[test]
    fn backwards_and_foreign_proposals_stay() {
        let t = resolve_transition(
            Mode::Onboarding,
            StateId::BarriersResources,
            Some(StateId::Intro),
            false,
        );
        assert_eq!(t.to, StateId::BarriersResources);
        let t = resolve_transition(
            Mode::Onboarding,
            StateId::Intro,
            Some(StateId::Commitment),
            false,
        );
        assert_eq!(t.to, StateId::Intro);
        let t = resolve_transition(Mode::Checkin, StateId::ProgressReview, None, false);
        assert_eq!(t.to, StateId::ProgressReview);
    }

    #[test]
    fn loose_parsing() {
        assert_eq!(
            StateId::parse_loose("goal_setting"),
            Some(StateId::GoalSetting)
        );
        assert_eq!(StateId::parse_loose(" Wrap Up "), Some(StateId::WrapUp));
        assert_eq!(StateId::parse_loose("lunch"), None);
        assert_eq!("at-will".parse::<Mode>(), Ok(Mode::Atwill));
    }

    proptest! {
        #[test]
        fn resolved_state_is_forward_and_gated(
            mode_idx in 0usize..2,
            cur in 0usize..5,
            prop_idx in proptest::option::of(0usize..10),
            plan in any::<bool>(),
        ) {
            let mode = [Mode::Onboarding, Mode::Checkin][mode_idx];
            let states = mode.states();
            let current = states[cur];
            let t = resolve_transition(mode, current, prop_idx.map(|i| StateId::ALL[i]), plan);
            let to_idx = states.iter().position(|s| *s == t.to).unwrap();
            prop_assert!(to_idx >= cur);
            if !plan {
                for s in &states[cur..to_idx] {
                    prop_assert!(!s.is_goal_setting());
                }
            }
        }
    }
}
