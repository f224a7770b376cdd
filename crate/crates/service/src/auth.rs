//! Opaque bearer tokens checked against a local registry file.

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clock skew tolerated past a token's expiry.
pub const EXPIRY_LEEWAY_SECS: i64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TokenEntry {
    pub token: String,
    pub user_id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    /// IANA zone for the user; the configured default applies when absent.
    #[serde(default)]
    pub timezone: Option<String>,
    #[serde(default)]
    pub expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("missing bearer token")]
    Missing,
    #[error("authorization header is not a bearer token")]
    Malformed,
    #[error("unknown token")]
    Invalid,
    #[error("token expired")]
    Expired,
}

impl AuthError {
    pub fn code(self) -> &'static str {
        match self {
            AuthError::Missing => "auth.missing",
            AuthError::Malformed => "auth.malformed",
            AuthError::Invalid => "auth.invalid",
            AuthError::Expired => "auth.expired",
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reading token registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing token registry: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("token registry lists token for `{0}` more than once")]
    Duplicate(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    tokens: Vec<TokenEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    by_token: HashMap<String, TokenEntry>,
}

impl TokenRegistry {
    pub fn new(entries: impl IntoIterator<Item = TokenEntry>) -> Result<Self, RegistryError> {
        let mut by_token = HashMap::new();
        for e in entries {
            let user = e.user_id.clone();
            if by_token.insert(e.token.clone(), e).is_some() {
                return Err(RegistryError::Duplicate(user));
            }
        }
        Ok(Self { by_token })
    }

    /// Reads `[[tokens]]` tables from a TOML file.
    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text)?;
        Self::new(file.tokens)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn entry_for_user(&self, user_id: &str) -> Option<&TokenEntry> {
        self.by_token.values().find(|e| e.user_id == user_id)
    }

    /// Resolves a raw token to its registry entry.
    pub fn validate(&self, token: &str, now: DateTime<Utc>) -> Result<&TokenEntry, AuthError> {
        let entry = self.by_token.get(token).ok_or(AuthError::Invalid)?;
        match entry.expires_at {
            Some(exp) if now > exp + Duration::seconds(EXPIRY_LEEWAY_SECS) => {
                Err(AuthError::Expired)
            }
            _ => Ok(entry),
        }
    }

    /// Resolves an `Authorization` header value.
    pub fn authenticate(
        &self,
        header: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<&TokenEntry, AuthError> {
        let header = header
            .map(str::trim)
            .filter(|h| !h.is_empty())
            .ok_or(AuthError::Missing)?;
        let (scheme, token) = header.split_once(' ').ok_or(AuthError::Malformed)?;
        if !scheme.eq_ignore_ascii_case("bearer") || token.trim().is_empty() {
            return Err(AuthError::Malformed);
        }
        self.validate(token.trim(), now)
    }
}
