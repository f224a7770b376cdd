//! Push delivery through an HTTP gateway, addressed by device tokens that
//! clients register per user.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::RwLock;
use std::time::Duration;

use bloom_core::notify::{NotificationRecord, NotificationSink, SinkError};
use serde_json::json;

use crate::store::{Collection, PersistenceStore, StoreError};

const DEVICES_DOC: &str = "devices";

/// Device push tokens per user.
#[derive(Debug, Default)]
pub struct DeviceRegistry {
    devices: RwLock<BTreeMap<String, BTreeSet<String>>>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&self, store: &dyn PersistenceStore, user: &str) -> Result<(), StoreError> {
        let tokens: BTreeSet<String> = match store.get(user, Collection::Profiles, DEVICES_DOC)? {
            Some(v) => serde_json::from_value(v).map_err(|e| StoreError::Corrupt {
                collection: Collection::Profiles,
                id: DEVICES_DOC.into(),
                message: e.to_string(),
            })?,
            None => BTreeSet::new(),
        };
        self.devices
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(user.to_string(), tokens);
        Ok(())
    }

    /// Adds a token and persists the user's device list. Returns false if it was already known.
    pub fn register(
        &self,
        store: &dyn PersistenceStore,
        user: &str,
        token: &str,
    ) -> Result<bool, StoreError> {
        let mut devices = self.devices.write().unwrap_or_else(|e| e.into_inner());
        let set = devices.entry(user.to_string()).or_default();
        let added = set.insert(token.to_string());
        if added {
            store.put(
                user,
                Collection::Profiles,
                DEVICES_DOC,
                &serde_json::to_value(&*set).expect("strings serialize"),
            )?;
        }
        Ok(added)
    }

    pub fn tokens(&self, user: &str) -> Vec<String> {
        self.devices
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(user)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }
}

/// Posts one JSON message per registered device to the gateway URL.
pub struct PushGatewaySink {
    url: String,
    client: reqwest::blocking::Client,
    devices: std::sync::Arc<DeviceRegistry>,
}

impl PushGatewaySink {
    /// Must be called outside an async runtime; the blocking client owns one.
    pub fn new(
        url: impl Into<String>,
        devices: std::sync::Arc<DeviceRegistry>,
    ) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()?;
        Ok(Self {
            url: url.into(),
            client,
            devices,
        })
    }
}

impl NotificationSink for PushGatewaySink {
    fn deliver(&self, user_id: &str, record: &NotificationRecord) -> Result<(), SinkError> {
        let tokens = self.devices.tokens(user_id);
        if tokens.is_empty() {
            return Err(SinkError::Unavailable(format!(
                "no devices registered for `{user_id}`"
            )));
        }
        for token in tokens {
            let body = json!({
                "to": token,
                "title": "Bloom",
                "body": record.text,
                "data": { "contentClass": record.content_class, "slot": record.slot },
            });
            let resp = self
                .client
                .post(&self.url)
                .json(&body)
                .send()
                .map_err(|e| SinkError::Unavailable(e.to_string()))?;
            if !resp.status().is_success() {
                return Err(SinkError::Rejected(format!(
                    "gateway answered {}",
                    resp.status()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MemoryStore;

    #[test]
    fn registry_persists_tokens() {
        let store = MemoryStore::new();
        let reg = DeviceRegistry::new();
        assert!(reg.register(&store, "u1", "dev-a").unwrap());
        assert!(!reg.register(&store, "u1", "dev-a").unwrap());
        assert!(reg.register(&store, "u1", "dev-b").unwrap());
        let reloaded = DeviceRegistry::new();
        reloaded.load(&store, "u1").unwrap();
        assert_eq!(reloaded.tokens("u1"), ["dev-a", "dev-b"]);
        assert!(reloaded.tokens("u2").is_empty());
    }
}
