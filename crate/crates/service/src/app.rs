//! Shared service state: the token registry, the store, the coach and
//! provider, and one lock-guarded entry per loaded user. All work for a
//! user runs under that user's lock, which is the single-writer queue.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use bloom_core::coach::Coach;
use bloom_core::notify::NotificationSink;
use bloom_core::provider::LlmProvider;
use bloom_core::workspace::{UserProfile, UserWorkspace};
use chrono::{DateTime, Duration, Utc};
use chrono_tz::Tz;
use serde_json::Value;

use crate::auth::{TokenEntry, TokenRegistry};
use crate::protocol::FrameLog;
use crate::push::DeviceRegistry;
use crate::store::{load_workspace, save_workspace, Collection, PersistenceStore, StoreError};
use crate::usage::UsageEvent;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock moved by hand; used by tests and scripted runs.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = at;
    }

    pub fn advance(&self, by: Duration) {
        let mut t = self.0.lock().unwrap_or_else(|e| e.into_inner());
        *t += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Everything loaded for one user.
#[derive(Debug)]
pub struct UserEntry {
    pub workspace: UserWorkspace,
    pub frames: FrameLog,
    pub usage: Vec<UsageEvent>,
}

pub struct AppState {
    pub registry: TokenRegistry,
    pub store: Arc<dyn PersistenceStore>,
    pub coach: Arc<Coach>,
    pub provider: Arc<dyn LlmProvider>,
    pub sink: Arc<dyn NotificationSink>,
    pub clock: Arc<dyn Clock>,
    pub default_timezone: Tz,
    pub devices: Arc<DeviceRegistry>,
    users: Mutex<HashMap<String, Arc<Mutex<UserEntry>>>>,
}

impl AppState {
    pub fn new(
        registry: TokenRegistry,
        store: Arc<dyn PersistenceStore>,
        coach: Arc<Coach>,
        provider: Arc<dyn LlmProvider>,
        sink: Arc<dyn NotificationSink>,
        clock: Arc<dyn Clock>,
        default_timezone: Tz,
    ) -> Self {
        Self {
            registry,
            store,
            coach,
            provider,
            sink,
            clock,
            default_timezone,
            devices: Arc::new(DeviceRegistry::new()),
            users: Mutex::new(HashMap::new()),
        }
    }

    /// Shares a device registry with a push sink built before the state.
    pub fn with_devices(mut self, devices: Arc<DeviceRegistry>) -> Self {
        self.devices = devices;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn load_entry(&self, token: &TokenEntry) -> Result<UserEntry, StoreError> {
        let store = self.store.as_ref();
        let user = token.user_id.as_str();
        let workspace = match load_workspace(store, user)? {
            Some(ws) => ws,
            None => {
                let tz = token
                    .timezone
                    .as_deref()
                    .and_then(|z| {
                        z.parse::<Tz>()
                            .map_err(|e| tracing::warn!(user, zone = z, error = %e, "bad timezone"))
                            .ok()
                    })
                    .unwrap_or(self.default_timezone);
                let name = token
                    .display_name
                    .clone()
                    .unwrap_or_else(|| user.to_string());
                let ws = UserWorkspace::new(UserProfile::new(user, name, tz));
                save_workspace(store, &ws)?;
                ws
            }
        };
        let frames = FrameLog::load(store, user)?;
        self.devices.load(store, user)?;
        let mut usage = Vec::new();
        for (id, v) in store.list(user, Collection::UsageEvents)? {
            usage.push(serde_json::from_value::<UsageEvent>(v).map_err(|e| {
                StoreError::Corrupt {
                    collection: Collection::UsageEvents,
                    id,
                    message: e.to_string(),
                }
            })?);
        }
        Ok(UserEntry {
            workspace,
            frames,
            usage,
        })
    }

    /// The user's entry, loading it from the store on first use.
    pub fn entry(&self, token: &TokenEntry) -> Result<Arc<Mutex<UserEntry>>, StoreError> {
        let mut users = self.users.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(e) = users.get(&token.user_id) {
            return Ok(e.clone());
        }
        let entry = Arc::new(Mutex::new(self.load_entry(token)?));
        users.insert(token.user_id.clone(), entry.clone());
        Ok(entry)
    }

    pub fn loaded_users(&self) -> Vec<(String, Arc<Mutex<UserEntry>>)> {
        let users = self.users.lock().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<_> = users.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Loads every user known to the registry that has stored data.
    pub fn load_all(&self) -> Result<usize, StoreError> {
        let stored = self.store.users()?;
        let mut n = 0;
        for user in stored {
            if let Some(token) = self.registry.entry_for_user(&user) {
                self.entry(&token.clone())?;
                n += 1;
            }
        }
        Ok(n)
    }

    /// Writes the workspace and frame log of a user.
    pub fn persist(&self, entry: &UserEntry) -> Result<(), StoreError> {
        save_workspace(self.store.as_ref(), &entry.workspace)?;
        entry
            .frames
            .save(self.store.as_ref(), entry.workspace.user_id())
    }

    pub fn append_usage(&self, entry: &mut UserEntry, event: UsageEvent) -> Result<(), StoreError> {
        let id = format!("{:08}", entry.usage.len() + 1);
        let doc: Value = serde_json::to_value(&event).expect("usage events serialize");
        self.store
            .put(&event.user_id, Collection::UsageEvents, &id, &doc)?;
        entry.usage.push(event);
        Ok(())
    }
}

pub fn lock(entry: &Mutex<UserEntry>) -> MutexGuard<'_, UserEntry> {
    entry.lock().unwrap_or_else(|e| e.into_inner())
}
