use std::fmt;

use serde::{Deserialize, Serialize};

/// Motivational-interviewing moves a coaching turn can be annotated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MiStrategy {
    OpenQuestion,
    ClosedQuestion,
    SimpleReflection,
    ComplexReflection,
    Affirm,
    Advise,
    EmphasizeControl,
    Support,
    Structure,
    RaiseConcern,
}

impl MiStrategy {
    pub const ALL: [MiStrategy; 10] = [
        MiStrategy::OpenQuestion,
        MiStrategy::ClosedQuestion,
        MiStrategy::SimpleReflection,
        MiStrategy::ComplexReflection,
        MiStrategy::Affirm,
        MiStrategy::Advise,
        MiStrategy::EmphasizeControl,
        MiStrategy::Support,
        MiStrategy::Structure,
        MiStrategy::RaiseConcern,
    ];

    /// Used when the strategy chain's answer cannot be read.
    pub const FALLBACK: MiStrategy = MiStrategy::OpenQuestion;

    pub fn as_str(self) -> &'static str {
        match self {
            MiStrategy::OpenQuestion => "openQuestion",
            MiStrategy::ClosedQuestion => "closedQuestion",
            MiStrategy::SimpleReflection => "simpleReflection",
            MiStrategy::ComplexReflection => "complexReflection",
            MiStrategy::Affirm => "affirm",
            MiStrategy::Advise => "advise",
            MiStrategy::EmphasizeControl => "emphasizeControl",
            MiStrategy::Support => "support",
            MiStrategy::Structure => "structure",
            MiStrategy::RaiseConcern => "raiseConcern",
        }
    }

    pub fn parse_loose(text: &str) -> Option<MiStrategy> {
        let norm = |s: &str| {
            s.chars()
                .filter(char::is_ascii_alphanumeric)
                .collect::<String>()
                .to_ascii_lowercase()
        };
        let wanted = norm(text);
        MiStrategy::ALL
            .into_iter()
            .find(|s| norm(s.as_str()) == wanted)
    }
}

impl fmt::Display for MiStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyAnnotation {
    pub code: MiStrategy,
    pub rationale: String,
    /// True when the chain output was unusable and [`MiStrategy::FALLBACK`] was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Deserialize)]
struct StrategyOutput {
    strategy: String,
    #[serde(default)]
    rationale: String,
}

/// Reads `{"strategy": .., "rationale": ..}` or a bare strategy code.
pub fn parse_strategy_output(text: &str) -> StrategyAnnotation {
    let json = text
        .find('{')
        .zip(text.rfind('}'))
        .filter(|(a, b)| a < b)
        .map(|(a, b)| &text[a..=b]);
    if let Some(out) = json.and_then(|j| serde_json::from_str::<StrategyOutput>(j).ok()) {
        if let Some(code) = MiStrategy::parse_loose(&out.strategy) {
            return StrategyAnnotation {
                code,
                rationale: out.rationale,
                fallback: false,
            };
        }
    } else if let Some(code) = MiStrategy::parse_loose(text) {
        return StrategyAnnotation {
            code,
            rationale: String::new(),
            fallback: false,
        };
    }
    tracing::warn!(output = %text, "unreadable strategy output; using fallback");
    StrategyAnnotation {
        code: MiStrategy::FALLBACK,
        rationale: "strategy output unreadable".into(),
        fallback: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_bare_forms() {
        let a = parse_strategy_output(
            r#"{"strategy": "complexReflection", "rationale": "mixed feelings"}"#,
        );
        assert_eq!(
            (a.code, a.rationale.as_str(), a.fallback),
            (MiStrategy::ComplexReflection, "mixed feelings", false)
        );
        assert_eq!(parse_strategy_output("affirm").code, MiStrategy::Affirm);
        assert_eq!(
            parse_strategy_output(" Raise concern. ").code,
            MiStrategy::RaiseConcern
        );
    }

    #[test]
    fn garbage_falls_back() {
        for text in ["", "lecture", r#"{"strategy": "lecture"}"#, "{not json}"] {
            let a = parse_strategy_output(text);
            assert_eq!(a.code, MiStrategy::FALLBACK, "{text}");
            assert!(a.fallback);
        }
    }

    #[test]
    fn every_code_round_trips() {
        for s in MiStrategy::ALL {
            assert_eq!(parse_strategy_output(s.as_str()).code, s);
            assert_eq!(serde_json::to_value(s).unwrap(), s.as_str());
        }
    }
}
