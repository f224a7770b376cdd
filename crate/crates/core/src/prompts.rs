//! Prompt templates as external text assets.
//!
//! Keys are slash-separated paths such as `coach/onboarding/goalSetting` or
//! `safety/classify`. Built-in defaults are compiled in; a directory with the
//! same layout (`<key>.txt`) overrides any subset of them.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

macro_rules! builtin {
    ($($key:literal),* $(,)?) => {
        &[$(($key, include_str!(concat!("../prompts/", $key, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "coach/persona",
    "coach/onboarding/intro",
    "coach/onboarding/motivationHistory",
    "coach/onboarding/barriersResources",
    "coach/onboarding/goalSetting",
    "coach/onboarding/wrapUp",
    "coach/checkin/progressReview",
    "coach/checkin/barrierDiscussion",
    "coach/checkin/planRevisionOrProgression",
    "coach/checkin/commitment",
    "coach/checkin/wrapUp",
    "coach/atwill/chat",
    "coach/chains/dialogue_state",
    "coach/chains/mi_strategy",
    "coach/chains/response",
    "coach/chains/summary",
    "coach/chains/plan_generation",
    "safety/classify",
    "safety/revise",
    "safety/categories/bodilyHarm",
    "safety/categories/bodyImage",
    "safety/categories/mentalHealth",
    "safety/categories/negativeMindsets",
    "safety/categories/inaccurateAdvice",
    "notifications/generate",
    "notifications/templates/reminderUpcoming",
    "notifications/templates/restDayCelebration",
    "notifications/templates/postActivityCongrats",
    "notifications/templates/postActivityFollowup",
    "notifications/templates/eveningCelebration",
    "notifications/templates/eveningReflection",
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no prompt template for `{0}`")]
    Missing(String),
    #[error("reading prompt overrides: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<String, String>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(k, v)| ((*k).to_string(), v.trim_end().to_string()))
            .collect();
        Self { templates }
    }

    /// Built-ins overlaid with every `*.txt` file under `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut lib = Self::builtin();
        lib.load_dir(dir, dir)?;
        Ok(lib)
    }

    fn load_dir(&mut self, root: &Path, dir: &Path) -> Result<(), PromptError> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                self.load_dir(root, &path)?;
            } else if path.extension().is_some_and(|e| e == "txt") {
                let rel = path
                    .strip_prefix(root)
                    .expect("walked path is under root")
                    .with_extension("");
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                self.templates
                    .insert(key, std::fs::read_to_string(&path)?.trim_end().to_string());
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, key: impl Into<String>, template: impl Into<String>) {
        self.templates.insert(key.into(), template.into());
    }

    pub fn get(&self, key: &str) -> Result<&str, PromptError> {
        self.templates
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| PromptError::Missing(key.to_string()))
    }

    /// Instructions for a coaching chain; a `(mode, state, chain)` specific
    /// template wins over the generic chain template.
    pub fn chain(&self, mode: &str, state: &str, chain: &str) -> Result<&str, PromptError> {
        self.get(&format!("coach/{mode}/{state}/{chain}"))
            .or_else(|_| self.get(&format!("coach/chains/{chain}")))
    }

    pub fn render(&self, key: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        Ok(render(self.get(key)?, vars))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Replaces `{{name}}` placeholders. Unknown placeholders are left in place.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_known_and_keeps_unknown() {
        assert_eq!(
            render("a {{x}} b {{ y }} {{z}}", &[("x", "1"), ("y", "2")]),
            "a 1 b 2 {{z}}"
        );
        assert_eq!(render("open {{ never closed", &[]), "open {{ never closed");
        assert_eq!(render("{{x}}{{x}}", &[("x", "ab")]), "abab");
    }

    #[test]
    fn builtins_are_non_empty() {
        let lib = PromptLibrary::builtin();
        for key in lib.keys() {
            assert!(!lib.get(key).unwrap().trim().is_empty(), "{key}");
        }
        assert!(lib.get("coach/nope").is_err());
    }

    #[test]
    fn chain_lookup_prefers_state_specific() {
        let mut lib = PromptLibrary::builtin();
        let generic = lib
            .chain("onboarding", "intro", "response")
            .unwrap()
            .to_string();
        lib.insert("coach/onboarding/intro/response", "special");
        assert_eq!(
            lib.chain("onboarding", "intro", "response").unwrap(),
            "special"
        );
        assert_eq!(
            lib.chain("onboarding", "wrapUp", "response").unwrap(),
            generic
        );
    }

    #[test]
    fn directory_overrides() {
        let dir = std::env::temp_dir().join(format!("bloom-prompts-{}", std::process::id()));
        std::fs::create_dir_all(dir.join("safety")).unwrap();
        std::fs::write(dir.join("safety/revise.txt"), "custom {{draft}}\n").unwrap();
        let lib = PromptLibrary::with_overrides(&dir).unwrap();
        assert_eq!(
            lib.render("safety/revise", &[("draft", "d")]).unwrap(),
            "custom d"
        );
        assert!(lib.get("safety/classify").unwrap().contains("harmful"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
