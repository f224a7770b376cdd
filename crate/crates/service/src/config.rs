//! Service configuration: a TOML file with `BLOOM_*` environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use chrono_tz::Tz;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {key}: {message}")]
    Value { key: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Openai,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Script file for `kind = "scripted"`.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::default(),
            base_url: default_base_url(),
            model: default_model(),
            api_key_env: default_api_key_env(),
            script: None,
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotificationConfig {
    #[serde(default = "default_tick")]
    pub tick_secs: u64,
    /// Push gateway; without one notifications are printed to stdout.
    #[serde(default)]
    pub push_url: Option<String>,
}

impl Default for NotificationConfig {
    fn default() -> Self {
        Self {
            tick_secs: default_tick(),
            push_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "default_registry")]
    pub token_registry: PathBuf,
    /// Without a data directory everything lives in memory.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_tz")]
    pub default_timezone: Tz,
    /// Directory of prompt overrides layered on the built-in library.
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub notifications: NotificationConfig,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}
fn default_registry() -> PathBuf {
    PathBuf::from("tokens.toml")
}
fn default_tz() -> Tz {
    Tz::UTC
}
fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}
fn default_model() -> String {
    "gpt-4o".into()
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> u64 {
    60
}
fn default_tick() -> u64 {
    60
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg =
            match path {
                Some(p) => Self::from_toml(&std::fs::read_to_string(p).map_err(|source| {
                    ConfigError::Io {
                        path: p.to_path_buf(),
                        source,
                    }
                })?)?,
                None => Self::default(),
            };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &'static str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e: T::Err| ConfigError::Value {
                key,
                message: e.to_string(),
            })
        }
        if let Some(v) = var("BLOOM_LISTEN") {
            self.listen = parse("BLOOM_LISTEN", &v)?;
        }
        if let Some(v) = var("BLOOM_TOKEN_REGISTRY") {
            self.token_registry = v.into();
        }
        if let Some(v) = var("BLOOM_DATA_DIR") {
            self.data_dir = Some(v.into());
        }
        if let Some(v) = var("BLOOM_DEFAULT_TIMEZONE") {
            self.default_timezone = parse("BLOOM_DEFAULT_TIMEZONE", &v)?;
        }
        if let Some(v) = var("BLOOM_PROVIDER_KIND") {
            self.provider.kind = match v.as_str() {
                "openai" => ProviderKind::Openai,
                "scripted" => ProviderKind::Scripted,
                other => {
                    return Err(ConfigError::Value {
                        key: "BLOOM_PROVIDER_KIND",
                        message: format!("expected openai or scripted, got `{other}`"),
                    })
                }
            };
        }
        if let Some(v) = var("BLOOM_PROVIDER_BASE_URL") {
            self.provider.base_url = v;
        }
        if let Some(v) = var("BLOOM_PROVIDER_MODEL") {
            self.provider.model = v;
        }
        if let Some(v) = var("BLOOM_PROVIDER_SCRIPT") {
            self.provider.script = Some(v.into());
        }
        if let Some(v) = var("BLOOM_PUSH_URL") {
            self.notifications.push_url = Some(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn file_then_env() {
        let mut cfg = ServiceConfig::from_toml(
            r#"
            listen = "0.0.0.0:9000"
            default_timezone = "Europe/Berlin"
            [provider]
            kind = "scripted"
            script = "s.json"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.provider.kind, ProviderKind::Scripted);
        assert_eq!(cfg.notifications.tick_secs, 60);
        let env: HashMap<&str, &str> = [
            ("BLOOM_LISTEN", "127.0.0.1:7000"),
            ("BLOOM_DATA_DIR", "/tmp/x"),
        ]
        .into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string()))
            .unwrap();
        assert_eq!(cfg.listen.port(), 7000);
        assert_eq!(cfg.data_dir.as_deref(), Some(Path::new("/tmp/x")));
        assert_eq!(cfg.default_timezone, chrono_tz::Europe::Berlin);

        let bad: HashMap<&str, &str> = [("BLOOM_PROVIDER_KIND", "magic")].into();
        assert!(cfg
            .apply_env(|k| bad.get(k).map(|v| v.to_string()))
            .is_err());
        assert!(ServiceConfig::from_toml("unknown = 1").is_err());
    }
}
