//! Outbound-message safety: per-category harm classification, one revision
//! round, and a fixed fallback when the revision is still flagged.

pub mod bench;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::prompts::{render, PromptLibrary};
use crate::provider::{tags, ChatMessage, CompletionRequest, LlmProvider, ProviderError};

pub use bench::{BenchmarkExample, Label, Split};

/// Sent instead of a reply whose revision still failed review.
pub const BLOCKED_FALLBACK: &str = "I'm not able to help with that the way I'd like to. If you're in pain, feeling unwell, or going through a hard time, please reach out to a doctor or another qualified professional. I'm here whenever you want to talk about your activity plan.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum HarmCategory {
    BodilyHarm,
    BodyImage,
    MentalHealth,
    NegativeMindsets,
    InaccurateAdvice,
}

impl HarmCategory {
    pub const ALL: [HarmCategory; 5] = [
        HarmCategory::BodilyHarm,
        HarmCategory::BodyImage,
        HarmCategory::MentalHealth,
        HarmCategory::NegativeMindsets,
        HarmCategory::InaccurateAdvice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HarmCategory::BodilyHarm => "bodilyHarm",
            HarmCategory::BodyImage => "bodyImage",
            HarmCategory::MentalHealth => "mentalHealth",
            HarmCategory::NegativeMindsets => "negativeMindsets",
            HarmCategory::InaccurateAdvice => "inaccurateAdvice",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            HarmCategory::BodilyHarm => "Bodily harm or overexertion",
            HarmCategory::BodyImage => "Body image and eating",
            HarmCategory::MentalHealth => "Mental health",
            HarmCategory::NegativeMindsets => "Negative mindsets",
            HarmCategory::InaccurateAdvice => "Inaccurate or out-of-scope advice",
        }
    }

    /// Provider tag for this category's classifier chain.
    pub fn classifier_tag(self) -> String {
        format!("{}{}", tags::SAFETY_CLASSIFY_PREFIX, self.as_str())
    }
}

impl fmt::Display for HarmCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HarmCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HarmCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown harm category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CategoryVerdict {
    pub harmful: bool,
    pub rationale: String,
    /// Set when the classifier output could not be used; such verdicts are harmful.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CategoryVerdict {
    fn failed(reason: String) -> Self {
        Self {
            harmful: true,
            rationale: "classifier output unusable; treated as harmful".into(),
            error: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SafetyVerdict {
    per_category: BTreeMap<HarmCategory, CategoryVerdict>,
    any_harmful: bool,
}

impl SafetyVerdict {
    pub fn new(per_category: BTreeMap<HarmCategory, CategoryVerdict>) -> Self {
        let any_harmful = per_category.values().any(|v| v.harmful);
        Self {
            per_category,
            any_harmful,
        }
    }

    pub fn any_harmful(&self) -> bool {
        self.any_harmful
    }

    pub fn per_category(&self) -> &BTreeMap<HarmCategory, CategoryVerdict> {
        &self.per_category
    }

    pub fn flagged(&self) -> BTreeSet<HarmCategory> {
        self.per_category
            .iter()
            .filter(|(_, v)| v.harmful)
            .map(|(c, _)| *c)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SafetyOutcome {
    Clean,
    Revised,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterResult {
    pub text: String,
    pub outcome: SafetyOutcome,
    pub initial: SafetyVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recheck: Option<SafetyVerdict>,
    pub provider_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShot {
    pub user_query: String,
    pub agent_response: String,
    pub harmful: bool,
}

#[derive(Debug, Deserialize)]
struct ClassifierOutput {
    harmful: bool,
    #[serde(default)]
    rationale: String,
}

/// Parses a classifier reply. Tolerates code fences and surrounding prose
/// around a single JSON object; anything else is an error.
pub fn parse_classifier_output(text: &str) -> Result<(bool, String), String> {
    let start = text
        .find('{')
        .ok_or("no JSON object in classifier output")?;
    let end = text
        .rfind('}')
        .ok_or("no JSON object in classifier output")?;
    if end < start {
        return Err("no JSON object in classifier output".into());
    }
    let parsed: ClassifierOutput =
        serde_json::from_str(&text[start..=end]).map_err(|e| e.to_string())?;
    Ok((parsed.harmful, parsed.rationale))
}

/// The classify-and-revise pipeline.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    prompts: PromptLibrary,
    few_shot: BTreeMap<HarmCategory, Vec<FewShot>>,
    concurrent: bool,
}

impl Default for SafetyFilter {
    fn default() -> Self {
        Self::new(PromptLibrary::builtin())
    }
}

impl SafetyFilter {
    pub fn new(prompts: PromptLibrary) -> Self {
        Self {
            prompts,
            few_shot: BTreeMap::new(),
            concurrent: true,
        }
    }

    /// Run the five classifier calls on scoped threads (default) or in order.
    pub fn concurrent(mut self, yes: bool) -> Self {
        self.concurrent = yes;
        self
    }

    /// Uses each example as a few-shot demonstration for its own category.
    pub fn with_few_shot(mut self, examples: &[BenchmarkExample]) -> Self {
        for ex in examples {
            self.few_shot.entry(ex.category).or_default().push(FewShot {
                user_query: ex.user_query.clone(),
                agent_response: ex.agent_response.clone(),
                harmful: ex.label == Label::Harmful,
            });
        }
        self
    }

    fn classifier_request(
        &self,
        category: HarmCategory,
        user_query: &str,
        response: &str,
    ) -> CompletionRequest {
        let definition = self
            .prompts
            .get(&format!("safety/categories/{}", category.as_str()))
            .unwrap_or(category.title());
        let mut examples = String::new();
        if let Some(shots) = self.few_shot.get(&category) {
            examples.push_str("Labeled examples:\n");
            for s in shots {
                let label = if s.harmful { "harmful" } else { "safe" };
                examples.push_str(&format!(
                    "User: {}\nCoach: {}\nLabel: {label}\n\n",
                    s.user_query, s.agent_response
                ));
            }
        }
        let template = self
            .prompts
            .get("safety/classify")
            .unwrap_or("{{category_definition}}");
        let system = render(
            template,
            &[
                ("category_name", category.title()),
                ("category_definition", definition),
                ("examples", &examples),
            ],
        );
        CompletionRequest::new(
            category.classifier_tag(),
            vec![
                ChatMessage::system(system),
                ChatMessage::user(format!(
                    "User message:\n{user_query}\n\nCoach reply:\n{response}"
                )),
            ],
        )
        .with_temperature(0.0)
        .with_max_tokens(256)
    }

    fn classify_one(
        &self,
        provider: &dyn LlmProvider,
        category: HarmCategory,
        q: &str,
        r: &str,
    ) -> CategoryVerdict {
        let req = self.classifier_request(category, q, r);
        let outcome = provider
            .complete(&req)
            .map_err(|e| e.to_string())
            .and_then(|c| {
                c.text()
                    .map(str::to_string)
                    .ok_or_else(|| "classifier returned a tool call".to_string())
            })
            .and_then(|t| parse_classifier_output(&t));
        match outcome {
            Ok((harmful, rationale)) => CategoryVerdict {
                harmful,
                rationale,
                error: None,
            },
            Err(reason) => {
                tracing::warn!(category = %category, %reason, "classifier failed; treating as harmful");
                CategoryVerdict::failed(reason)
            }
        }
    }

    /// Exactly five provider calls, one per category.
    pub fn classify(
        &self,
        provider: &dyn LlmProvider,
        user_query: &str,
        response: &str,
    ) -> SafetyVerdict {
        let per_category = if self.concurrent {
            std::thread::scope(|s| {
                let handles: Vec<_> = HarmCategory::ALL
                    .into_iter()
                    .map(|c| {
                        (
                            c,
                            s.spawn(move || self.classify_one(provider, c, user_query, response)),
                        )
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|(c, h)| {
                        (
                            c,
                            h.join().unwrap_or_else(|_| {
                                CategoryVerdict::failed("classifier panicked".into())
                            }),
                        )
                    })
                    .collect()
            })
        } else {
            HarmCategory::ALL
                .into_iter()
                .map(|c| (c, self.classify_one(provider, c, user_query, response)))
                .collect()
        };
        SafetyVerdict::new(per_category)
    }

    /// One provider call producing a replacement for a flagged reply.
    pub fn revise(
        &self,
        provider: &dyn LlmProvider,
        user_query: &str,
        draft: &str,
        verdict: &SafetyVerdict,
        history: &[ChatMessage],
    ) -> Result<String, ProviderError> {
        let rationales = verdict
            .per_category()
            .iter()
            .filter(|(_, v)| v.harmful)
            .map(|(c, v)| format!("- {}: {}", c.title(), v.rationale))
            .collect::<Vec<_>>()
            .join("\n");
        let template = self
            .prompts
            .get("safety/revise")
            .unwrap_or("{{rationales}}\n{{draft}}");
        let mut messages = vec![ChatMessage::system(render(
            template,
            &[("rationales", &rationales), ("draft", draft)],
        ))];
        messages.extend(
            history
                .iter()
                .filter(|m| m.tool_call.is_none() && m.tool_call_id.is_none())
                .cloned(),
        );
        messages.push(ChatMessage::user(format!(
            "The user's latest message was:\n{user_query}\n\nRewrite the flagged draft now."
        )));
        let req = CompletionRequest::new(tags::SAFETY_REVISE, messages)
            .with_temperature(0.0)
            .with_max_tokens(512);
        match provider.complete(&req)? {
            crate::provider::Completion::Text(t) if !t.trim().is_empty() => {
                Ok(t.trim().to_string())
            }
            _ => Err(ProviderError::Fatal("revision produced no text".into())),
        }
    }

    /// Never returns text whose latest classification was harmful.
    pub fn filter_message(
        &self,
        provider: &dyn LlmProvider,
        user_query: &str,
        candidate: &str,
        history: &[ChatMessage],
    ) -> FilterResult {
        let initial = self.classify(provider, user_query, candidate);
        if !initial.any_harmful() {
            return FilterResult {
                text: candidate.to_string(),
                outcome: SafetyOutcome::Clean,
                initial,
                recheck: None,
                provider_calls: 5,
            };
        }
        let revised = match self.revise(provider, user_query, candidate, &initial, history) {
            Ok(t) => t,
            Err(e) => {
                tracing::warn!(error = %e, "revision failed; blocking message");
                return FilterResult {
                    text: BLOCKED_FALLBACK.to_string(),
                    outcome: SafetyOutcome::Blocked,
                    initial,
                    recheck: None,
                    provider_calls: 6,
                };
            }
        };
        let recheck = self.classify(provider, user_query, &revised);
        let (text, outcome) = if recheck.any_harmful() {
            (BLOCKED_FALLBACK.to_string(), SafetyOutcome::Blocked)
        } else {
            (revised, SafetyOutcome::Revised)
        };
        FilterResult {
            text,
            outcome,
            initial,
            recheck: Some(recheck),
            provider_calls: 11,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{
        Completion, FnProvider, RecordingProvider, Script, ScriptResponse, ScriptedProvider,
    };

    fn verdict_json(harmful: bool) -> String {
        format!("{{\"harmful\": {harmful}, \"rationale\": \"r\"}}")
    }

    fn all_clean_script() -> Script {
        let mut s = Script::default();
        s.default_text("safety.classify.*", verdict_json(false));
        s
    }

    #[test]
    fn parse_tolerates_fences() {
        assert_eq!(
            parse_classifier_output("```json\n{\"harmful\": true, \"rationale\": \"x\"}\n```")
                .unwrap(),
            (true, "x".into())
        );
        assert!(parse_classifier_output("harmful: yes").is_err());
        assert!(parse_classifier_output("{\"harmful\": \"maybe\"}").is_err());
        assert!(parse_classifier_output("} {").is_err());
    }

    #[test]
    fn single_category_flag() {
        let mut s = all_clean_script();
        s.text("safety.classify.bodilyHarm", verdict_json(true));
        let p = ScriptedProvider::new(s);
        let v = SafetyFilter::default().classify(&p, "q", "r");
        assert!(v.any_harmful());
        assert_eq!(v.flagged(), BTreeSet::from([HarmCategory::BodilyHarm]));
    }

    #[test]
    fn all_clean() {
        let p = ScriptedProvider::new(all_clean_script());
        let v = SafetyFilter::default().classify(&p, "q", "r");
        assert!(!v.any_harmful());
        assert_eq!(v.per_category().len(), 5);
    }

    #[test]
    fn malformed_output_is_fail_safe() {
        let mut s = all_clean_script();
        s.text("safety.classify.mentalHealth", "I think it is fine");
        let p = ScriptedProvider::new(s);
        let v = SafetyFilter::default().classify(&p, "q", "r");
        assert_eq!(v.flagged(), BTreeSet::from([HarmCategory::MentalHealth]));
        assert!(v.per_category()[&HarmCategory::MentalHealth]
            .error
            .is_some());
    }

    #[test]
    fn classifier_requests_are_temperature_zero_with_own_definition() {
        let rec = RecordingProvider::new(ScriptedProvider::new(all_clean_script()));
        SafetyFilter::default()
            .concurrent(false)
            .classify(&rec, "q", "r");
        let reqs = rec.requests();
        assert_eq!(reqs.len(), 5);
        for (req, cat) in reqs.iter().zip(HarmCategory::ALL) {
            assert_eq!(req.tag, cat.classifier_tag());
            assert_eq!(req.temperature, 0.0);
            assert!(req.messages[0].content.contains(cat.title()));
        }
    }

    #[test]
    fn few_shot_examples_land_in_their_category_prompt() {
        let ex = BenchmarkExample {
            user_query: "my knee hurts".into(),
            agent_response: "push through it".into(),
            category: HarmCategory::BodilyHarm,
            label: Label::Harmful,
            split: Split::Train,
        };
        let rec = RecordingProvider::new(ScriptedProvider::new(all_clean_script()));
        SafetyFilter::default()
            .concurrent(false)
            .with_few_shot(&[ex])
            .classify(&rec, "q", "r");
        let reqs = rec.requests();
        assert!(reqs[0].messages[0].content.contains("push through it"));
        assert!(!reqs[1].messages[0].content.contains("push through it"));
    }

    #[test]
    fn clean_passes_through() {
        let p = RecordingProvider::new(ScriptedProvider::new(all_clean_script()));
        let r = SafetyFilter::default().filter_message(&p, "q", "go for a walk", &[]);
        assert_eq!(
            (r.text.as_str(), r.outcome),
            ("go for a walk", SafetyOutcome::Clean)
        );
        assert_eq!(p.call_count(), 5);
    }

    #[test]
    fn harmful_then_revised_clean() {
        let mut s = all_clean_script();
        s.text("safety.classify.bodilyHarm", verdict_json(true))
            .text("safety.revise", "please rest and see a doctor");
        let p = RecordingProvider::new(ScriptedProvider::new(s));
        let r = SafetyFilter::default().filter_message(&p, "my ankle hurts", "run anyway", &[]);
        assert_eq!(r.outcome, SafetyOutcome::Revised);
        assert_eq!(r.text, "please rest and see a doctor");
        assert_eq!(p.call_count(), 11);
        assert_eq!(r.provider_calls, 11);
    }

    #[test]
    fn still_harmful_is_blocked() {
        let mut s = all_clean_script();
        s.text("safety.classify.bodyImage", verdict_json(true))
            .text("safety.classify.bodyImage", verdict_json(true))
            .text("safety.revise", "still bad");
        let p = ScriptedProvider::new(s);
        let r = SafetyFilter::default().filter_message(&p, "q", "bad", &[]);
        assert_eq!(
            (r.text.as_str(), r.outcome),
            (BLOCKED_FALLBACK, SafetyOutcome::Blocked)
        );
    }

    #[test]
    fn revision_failure_is_blocked() {
        let mut s = all_clean_script();
        s.text("safety.classify.negativeMindsets", verdict_json(true))
            .push(
                "safety.revise",
                ScriptResponse::Error {
                    transient: false,
                    message: "down".into(),
                },
            );
        let p = ScriptedProvider::new(s);
        let r = SafetyFilter::default().filter_message(&p, "q", "bad", &[]);
        assert_eq!(r.outcome, SafetyOutcome::Blocked);
        assert_eq!(r.text, BLOCKED_FALLBACK);
    }

    #[test]
    fn revision_sees_rationales_and_history() {
        let p = RecordingProvider::new(FnProvider(|req: &CompletionRequest| {
            Ok(Completion::Text(if req.tag == tags::SAFETY_REVISE {
                "fixed".into()
            } else if req.messages[1].content.contains("bad draft") {
                "{\"harmful\": true, \"rationale\": \"encourages pain\"}".into()
            } else {
                verdict_json(false)
            }))
        }));
        let history = vec![
            ChatMessage::user("earlier"),
            ChatMessage::assistant("earlier reply"),
        ];
        let r = SafetyFilter::default().filter_message(&p, "q", "bad draft", &history);
        assert_eq!(r.outcome, SafetyOutcome::Revised);
        let revise = p
            .requests()
            .into_iter()
            .find(|r| r.tag == tags::SAFETY_REVISE)
            .unwrap();
        assert!(revise.messages[0].content.contains("encourages pain"));
        assert!(revise.messages[0].content.contains("bad draft"));
        assert_eq!(revise.messages[1].content, "earlier");
    }
}
