//! Document persistence keyed by (user, collection, document id), and the
//! mapping between a user's workspace and those documents.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use bloom_core::coach::{ChatSession, MemorySummary, UserSessions};
use bloom_core::garden::GardenEvent;
use bloom_core::health::HealthSample;
use bloom_core::notify::NotificationScheduler;
use bloom_core::plan::{WeeklyPlan, WorkoutRecord};
use bloom_core::workspace::{
    GardenCursor, UserProfile, UserWorkspace, WorkspaceError, WorkspaceSnapshot,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Collection {
    Profiles,
    Plans,
    Gardens,
    Sessions,
    Memories,
    Notifications,
    HealthSamples,
    WorkoutRecords,
    UsageEvents,
    /// Outbound chat frames per session, kept for resumption.
    Frames,
}

impl Collection {
    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Profiles => "profiles",
            Collection::Plans => "plans",
            Collection::Gardens => "gardens",
            Collection::Sessions => "sessions",
            Collection::Memories => "memories",
            Collection::Notifications => "notifications",
            Collection::HealthSamples => "healthSamples",
            Collection::WorkoutRecords => "workoutRecords",
            Collection::UsageEvents => "usageEvents",
            Collection::Frames => "frames",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt document {collection}/{id}: {message}")]
    Corrupt {
        collection: Collection,
        id: String,
        message: String,
    },
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

/// Writes for one user are applied in call order and visible to every
/// later read once the call returns.
pub trait PersistenceStore: Send + Sync {
    fn get(
        &self,
        user: &str,
        collection: Collection,
        id: &str,
    ) -> Result<Option<Value>, StoreError>;
    fn put(
        &self,
        user: &str,
        collection: Collection,
        id: &str,
        doc: &Value,
    ) -> Result<(), StoreError>;
    fn delete(&self, user: &str, collection: Collection, id: &str) -> Result<(), StoreError>;
    /// Documents of a collection ordered by id.
    fn list(&self, user: &str, collection: Collection) -> Result<Vec<(String, Value)>, StoreError>;
    fn users(&self) -> Result<Vec<String>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    docs: Mutex<BTreeMap<(String, Collection, String), Value>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn docs(&self) -> std::sync::MutexGuard<'_, BTreeMap<(String, Collection, String), Value>> {
        self.docs.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl PersistenceStore for MemoryStore {
    fn get(
        &self,
        user: &str,
        collection: Collection,
        id: &str,
    ) -> Result<Option<Value>, StoreError> {
        Ok(self
            .docs()
            .get(&(user.to_string(), collection, id.to_string()))
            .cloned())
    }

    fn put(
        &self,
        user: &str,
        collection: Collection,
        id: &str,
        doc: &Value,
    ) -> Result<(), StoreError> {
        self.docs()
            .insert((user.to_string(), collection, id.to_string()), doc.clone());
        Ok(())
    }

    fn delete(&self, user: &str, collection: Collection, id: &str) -> Result<(), StoreError> {
        self.docs()
            .remove(&(user.to_string(), collection, id.to_string()));
        Ok(())
    }

    fn list(&self, user: &str, collection: Collection) -> Result<Vec<(String, Value)>, StoreError> {
        Ok(self
            .docs()
            .iter()
            .filter(|((u, c, _), _)| u == user && *c == collection)
            .map(|((_, _, id), v)| (id.clone(), v.clone()))
            .collect())
    }

    fn users(&self) -> Result<Vec<String>, StoreError> {
        let mut users: Vec<String> = self.docs().keys().map(|(u, _, _)| u.clone()).collect();
        users.dedup();
        Ok(users)
    }
}

/// One JSON file per document under `root/<user>/<collection>/`. Writes go
/// to a temporary file that is renamed into place, so a crash leaves
/// either the old or the new document.
#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

/// Maps an id to a file-name-safe string; reversible.
fn encode_name(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'-' | b'_' | b'.'
                if !(out.is_empty() && b == b'.') =>
            {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn decode_name(name: &str) -> Option<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = name.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, user: &str, collection: Collection) -> PathBuf {
        self.root.join(encode_name(user)).join(collection.as_str())
    }

    fn path(&self, user: &str, collection: Collection, id: &str) -> PathBuf {
        self.dir(user, collection)
            .join(format!("{}.json", encode_name(id)))
    }

    fn read(path: &Path, collection: Collection, id: &str) -> Result<Value, StoreError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            collection,
            id: id.to_string(),
            message: e.to_string(),
        })
    }
}

impl PersistenceStore for FileStore {
    fn get(
        &self,
        user: &str,
        collection: Collection,
        id: &str,
    ) -> Result<Option<Value>, StoreError> {
        let path = self.path(user, collection, id);
        if !path.exists() {
            return Ok(None);
        }
        Self::read(&path, collection, id).map(Some)
    }

    fn put(
        &self,
        user: &str,
        collection: Collection,
        id: &str,
        doc: &Value,
    ) -> Result<(), StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = self.dir(user, collection);
        fs::create_dir_all(&dir)?;
        let path = self.path(user, collection, id);
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(
            serde_json::to_string_pretty(doc)
                .expect("json values serialize")
                .as_bytes(),
        )?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn delete(&self, user: &str, collection: Collection, id: &str) -> Result<(), StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        match fs::remove_file(self.path(user, collection, id)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }

    fn list(&self, user: &str, collection: Collection) -> Result<Vec<(String, Value)>, StoreError> {
        let dir = self.dir(user, collection);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(stem) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
            else {
                continue;
            };
            let Some(id) = decode_name(stem) else {
                continue;
            };
            out.push((id.clone(), Self::read(&path, collection, &id)?));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn users(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                if let Some(u) = entry.file_name().to_str().and_then(decode_name) {
                    out.push(u);
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

const SINGLETON: &str = "current";

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct GardenDoc {
    events: Vec<GardenEvent>,
    cursor: GardenCursor,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SessionIndex {
    active_session_id: Option<String>,
    next_session_number: u64,
}

fn to_doc<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("domain types serialize")
}

fn from_doc<T: for<'de> Deserialize<'de>>(
    collection: Collection,
    id: &str,
    v: Value,
) -> Result<T, StoreError> {
    serde_json::from_value(v).map_err(|e| StoreError::Corrupt {
        collection,
        id: id.to_string(),
        message: e.to_string(),
    })
}

/// Writes every document of a workspace. Health samples are written by
/// [`save_health_samples`] as they arrive since they are never modified.
pub fn save_workspace(store: &dyn PersistenceStore, ws: &UserWorkspace) -> Result<(), StoreError> {
    let user = ws.user_id();
    store.put(user, Collection::Profiles, SINGLETON, &to_doc(&ws.profile))?;
    for plan in ws.plans.iter() {
        store.put(
            user,
            Collection::Plans,
            &plan.week_start.to_string(),
            &to_doc(plan),
        )?;
    }
    let garden = GardenDoc {
        events: ws.garden.events().to_vec(),
        cursor: ws.garden_cursor.clone(),
    };
    store.put(user, Collection::Gardens, SINGLETON, &to_doc(&garden))?;
    let index = SessionIndex {
        active_session_id: ws.sessions.active.as_ref().map(|s| s.session_id.clone()),
        next_session_number: ws.sessions.next_session_number,
    };
    store.put(user, Collection::Sessions, "_index", &to_doc(&index))?;
    for s in ws.sessions.active.iter().chain(ws.sessions.ended.iter()) {
        store.put(user, Collection::Sessions, &s.session_id, &to_doc(s))?;
    }
    for m in &ws.sessions.memory {
        store.put(user, Collection::Memories, &m.session_id, &to_doc(m))?;
    }
    store.put(
        user,
        Collection::Notifications,
        SINGLETON,
        &to_doc(&ws.notifications),
    )?;
    for r in &ws.workout_records {
        store.put(user, Collection::WorkoutRecords, &r.id, &to_doc(r))?;
    }
    Ok(())
}

pub fn save_health_samples(
    store: &dyn PersistenceStore,
    user: &str,
    samples: &[HealthSample],
) -> Result<(), StoreError> {
    for s in samples {
        store.put(
            user,
            Collection::HealthSamples,
            &s.key().document_id(),
            &to_doc(s),
        )?;
    }
    Ok(())
}

/// Rebuilds a workspace from its documents; `None` if the user has no profile.
pub fn load_workspace(
    store: &dyn PersistenceStore,
    user: &str,
) -> Result<Option<UserWorkspace>, StoreError> {
    let Some(profile) = store.get(user, Collection::Profiles, SINGLETON)? else {
        return Ok(None);
    };
    let profile: UserProfile = from_doc(Collection::Profiles, SINGLETON, profile)?;
    let plans = store
        .list(user, Collection::Plans)?
        .into_iter()
        .map(|(id, v)| from_doc::<WeeklyPlan>(Collection::Plans, &id, v))
        .collect::<Result<Vec<_>, _>>()?;
    let garden: GardenDoc = match store.get(user, Collection::Gardens, SINGLETON)? {
        Some(v) => from_doc(Collection::Gardens, SINGLETON, v)?,
        None => GardenDoc {
            events: Vec::new(),
            cursor: GardenCursor::default(),
        },
    };
    let mut index = SessionIndex {
        active_session_id: None,
        next_session_number: 0,
    };
    let mut all_sessions = Vec::new();
    for (id, v) in store.list(user, Collection::Sessions)? {
        if id == "_index" {
            index = from_doc(Collection::Sessions, &id, v)?;
        } else {
            all_sessions.push(from_doc::<ChatSession>(Collection::Sessions, &id, v)?);
        }
    }
    let mut sessions = UserSessions {
        next_session_number: index.next_session_number,
        ..UserSessions::new()
    };
    for s in all_sessions {
        if Some(&s.session_id) == index.active_session_id.as_ref() {
            sessions.active = Some(s);
        } else {
            sessions.ended.push(s);
        }
    }
    sessions.ended.sort_by(|a, b| {
        a.started_at
            .cmp(&b.started_at)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    sessions.memory = store
        .list(user, Collection::Memories)?
        .into_iter()
        .map(|(id, v)| from_doc::<MemorySummary>(Collection::Memories, &id, v))
        .collect::<Result<Vec<_>, _>>()?;
    sessions.memory.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    let notifications: NotificationScheduler =
        match store.get(user, Collection::Notifications, SINGLETON)? {
            Some(v) => from_doc(Collection::Notifications, SINGLETON, v)?,
            None => NotificationScheduler::new(),
        };
    let health_samples = store
        .list(user, Collection::HealthSamples)?
        .into_iter()
        .map(|(id, v)| from_doc::<HealthSample>(Collection::HealthSamples, &id, v))
        .collect::<Result<Vec<_>, _>>()?;
    let workout_records = store
        .list(user, Collection::WorkoutRecords)?
        .into_iter()
        .map(|(id, v)| from_doc::<WorkoutRecord>(Collection::WorkoutRecords, &id, v))
        .collect::<Result<Vec<_>, _>>()?;
    let snapshot = WorkspaceSnapshot {
        profile,
        plans,
        garden_events: garden.events,
        garden_cursor: garden.cursor,
        health_samples,
        workout_records,
        sessions,
        notifications,
    };
    Ok(Some(UserWorkspace::restore(snapshot)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_encoding_round_trips() {
        for id in [
            "2025-05-05",
            "src|stepCount|1714900000000",
            "../etc",
            ".hidden",
            "a b/c",
            "ünï",
        ] {
            let enc = encode_name(id);
            assert!(!enc.contains('/') && !enc.starts_with('.'), "{enc}");
            assert_eq!(decode_name(&enc).as_deref(), Some(id));
        }
    }

    fn exercise(store: &dyn PersistenceStore) {
        let doc = serde_json::json!({"a": 1});
        store
            .put("u1", Collection::Plans, "2025-05-12", &doc)
            .unwrap();
        store
            .put("u1", Collection::Plans, "2025-05-05", &doc)
            .unwrap();
        store.put("u2", Collection::Plans, "x", &doc).unwrap();
        assert_eq!(
            store.get("u1", Collection::Plans, "2025-05-05").unwrap(),
            Some(doc.clone())
        );
        assert_eq!(
            store.get("u1", Collection::Gardens, "2025-05-05").unwrap(),
            None
        );
        let ids: Vec<_> = store
            .list("u1", Collection::Plans)
            .unwrap()
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        assert_eq!(ids, ["2025-05-05", "2025-05-12"]);
        store
            .put(
                "u1",
                Collection::Plans,
                "2025-05-05",
                &serde_json::json!({"a": 2}),
            )
            .unwrap();
        assert_eq!(
            store
                .get("u1", Collection::Plans, "2025-05-05")
                .unwrap()
                .unwrap()["a"],
            2
        );
        store.delete("u1", Collection::Plans, "2025-05-05").unwrap();
        store.delete("u1", Collection::Plans, "2025-05-05").unwrap();
        assert_eq!(store.list("u1", Collection::Plans).unwrap().len(), 1);
        assert_eq!(store.users().unwrap(), ["u1", "u2"]);
    }

    #[test]
    fn memory_store_contract() {
        exercise(&MemoryStore::new());
    }

    #[test]
    fn file_store_contract() {
        let dir = tempfile::tempdir().unwrap();
        exercise(&FileStore::open(dir.path()).unwrap());
    }
}
