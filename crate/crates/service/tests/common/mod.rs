#![allow(dead_code)]

use std::sync::Arc;

use bloom_core::coach::Coach;
use bloom_core::notify::MemorySink;
use bloom_core::provider::ScriptedProvider;
use bloom_core::replay::ReplayFixture;
use bloom_service::app::{AppState, ManualClock};
use bloom_service::auth::TokenRegistry;
use bloom_service::store::PersistenceStore;
use chrono::{DateTime, Utc};

pub const TOKEN: &str = "tok-demo";
pub const EXPIRED_TOKEN: &str = "tok-old";

pub fn registry() -> TokenRegistry {
    TokenRegistry::from_toml(
        r#"
        [[tokens]]
        token = "tok-demo"
        userId = "demo"
        displayName = "Sam"
        timezone = "America/New_York"

        [[tokens]]
        token = "tok-old"
        userId = "former"
        expiresAt = "2025-01-01T00:00:00Z"
        "#,
    )
    .expect("registry parses")
}

pub struct Harness {
    pub state: Arc<AppState>,
    pub clock: Arc<ManualClock>,
    pub sink: Arc<MemorySink>,
}

/// App state backed by `store`, answering from the bundled onboarding script.
pub fn harness(store: Arc<dyn PersistenceStore>, start: DateTime<Utc>) -> Harness {
    let fixture = ReplayFixture::onboarding();
    let clock = Arc::new(ManualClock::new(start));
    let sink = Arc::new(MemorySink::new());
    let state = AppState::new(
        registry(),
        store,
        Arc::new(Coach::default()),
        Arc::new(ScriptedProvider::new(fixture.script)),
        sink.clone(),
        clock.clone(),
        chrono_tz::UTC,
    );
    Harness {
        state: Arc::new(state),
        clock,
        sink,
    }
}

/// Every route the service exposes, with a concrete path for each.
pub const ENDPOINTS: &[(&str, &str)] = &[
    ("GET", "/v1/me"),
    ("PUT", "/v1/me/preferences"),
    ("GET", "/v1/plans"),
    ("GET", "/v1/plans/current"),
    ("GET", "/v1/plans/2025-05-05"),
    ("PUT", "/v1/plans/2025-05-05"),
    ("GET", "/v1/plans/2025-05-05/metrics"),
    ("POST", "/v1/plans/2025-05-05/workouts"),
    ("PATCH", "/v1/plans/2025-05-05/workouts/w1"),
    ("DELETE", "/v1/plans/2025-05-05/workouts/w1"),
    ("PUT", "/v1/plans/2025-05-05/workouts/w1/complete"),
    ("GET", "/v1/garden"),
    ("POST", "/v1/health/samples"),
    ("GET", "/v1/health/query?sampleType=stepCount"),
    ("GET", "/v1/health/guideline?weekStart=2025-05-05"),
    ("POST", "/v1/workouts"),
    ("GET", "/v1/notifications"),
    ("POST", "/v1/usage"),
    ("GET", "/v1/usage/daily"),
    ("GET", "/v1/sessions"),
    ("GET", "/v1/sessions/s1"),
    ("POST", "/v1/devices"),
    ("GET", "/v1/chat"),
];

/// Authorization headers that must all be refused.
pub const BAD_CREDENTIALS: &[Option<&str>] = &[
    None,
    Some("Token tok-demo"),
    Some("Bearer"),
    Some("Bearer nope"),
    Some("Bearer tok-old"),
];

/// Sends every endpoint every bad credential. Returns the failures: any
/// response other than 401, or any store write.
pub async fn unauthenticated_sweep() -> Vec<String> {
    use axum::body::Body;
    use axum::http::Request;
    use bloom_service::store::MemoryStore;
    use tower::ServiceExt;

    let store = Arc::new(MemoryStore::new());
    let h = harness(store.clone(), "2025-05-05T12:00:00Z".parse().unwrap());
    let app = bloom_service::server::router(h.state.clone());
    let mut failures = Vec::new();
    for (method, path) in ENDPOINTS {
        for cred in BAD_CREDENTIALS {
            let mut req = Request::builder()
                .method(*method)
                .uri(*path)
                .header("content-type", "application/json");
            if let Some(c) = cred {
                req = req.header("authorization", *c);
            }
            let resp = app
                .clone()
                .oneshot(req.body(Body::from("{}")).unwrap())
                .await
                .unwrap();
            if resp.status() != 401 {
                failures.push(format!(
                    "{method} {path} with {cred:?} answered {}",
                    resp.status()
                ));
            }
        }
    }
    let users = store.users().unwrap();
    if !users.is_empty() || !h.state.loaded_users().is_empty() {
        failures.push(format!("store was touched for {users:?}"));
    }
    failures
}

/// Sends one client frame through the router under the user's lock.
pub fn send_frame(
    state: &AppState,
    frame: serde_json::Value,
) -> Vec<bloom_service::protocol::WireFrame> {
    let token = state
        .registry
        .entry_for_user("demo")
        .expect("demo user")
        .clone();
    let entry = state.entry(&token).expect("entry loads");
    let mut guard = bloom_service::app::lock(&entry);
    bloom_service::protocol::route_frame(state, &mut guard, &frame.to_string())
}

/// Runs the bundled onboarding conversation over the frame protocol and
/// ends the session. Returns every frame the server sent.
pub fn drive_onboarding(h: &Harness) -> Vec<bloom_service::protocol::WireFrame> {
    use serde_json::json;
    let fixture = ReplayFixture::onboarding();
    h.clock.set(fixture.start_at);
    let mut out = send_frame(
        &h.state,
        json!({"type": "sessionControl", "sessionId": "", "seq": 1, "payload": {"action": "start", "mode": "onboarding"}}),
    );
    let session_id = out[0].session_id.clone();
    let mut seq = 0;
    for turn in &fixture.turns {
        h.clock.set(turn.at);
        seq += 1;
        out.extend(send_frame(
            &h.state,
            json!({"type": "userMessage", "sessionId": session_id, "seq": seq, "payload": {"text": turn.message}}),
        ));
    }
    if let Some(end) = fixture.end_at {
        h.clock.set(end);
    }
    seq += 1;
    out.extend(send_frame(
        &h.state,
        json!({"type": "sessionControl", "sessionId": session_id, "seq": seq, "payload": {"action": "end"}}),
    ));
    out
}

async fn call(
    app: &axum::Router,
    method: &str,
    path: &str,
    body: serde_json::Value,
) -> (u16, serde_json::Value) {
    use axum::body::Body;
    use axum::http::Request;
    use tower::ServiceExt;
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("authorization", format!("Bearer {TOKEN}"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 24)
        .await
        .unwrap();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null),
    )
}

fn snapshot_json(state: &AppState) -> Result<(String, String), String> {
    let token = state
        .registry
        .entry_for_user("demo")
        .ok_or("no demo user")?
        .clone();
    let entry = state.entry(&token).map_err(|e| e.to_string())?;
    let guard = bloom_service::app::lock(&entry);
    let snap = serde_json::to_string(&guard.workspace.snapshot()).map_err(|e| e.to_string())?;
    let scene = guard.workspace.garden_descriptor().to_json();
    Ok((snap, scene))
}

/// Builds up plan, garden, session, health and notification state on a file
/// store, restarts on the same directory and compares the reloaded state.
pub async fn crash_recovery(dir: &std::path::Path) -> Result<(), String> {
    use bloom_service::store::FileStore;
    use serde_json::json;

    let open = || -> Result<Arc<dyn PersistenceStore>, String> {
        Ok(Arc::new(FileStore::open(dir).map_err(|e| e.to_string())?))
    };
    let h = harness(open()?, "2025-05-05T14:00:00Z".parse().unwrap());
    let frames = tokio::task::block_in_place(|| drive_onboarding(&h));
    if !frames
        .iter()
        .any(|f| f.frame_type == bloom_service::protocol::FrameType::PlanWidget)
    {
        return Err("onboarding produced no plan".into());
    }
    let app = bloom_service::server::router(h.state.clone());

    h.clock.set("2025-05-06T12:00:00Z".parse().unwrap());
    let (s, v) = call(
        &app,
        "POST",
        "/v1/workouts",
        json!({"id": "rec-1", "activity": "walking", "start": "2025-05-06T07:05:00", "end": "2025-05-06T07:30:00"}),
    )
    .await;
    if s != 200 {
        return Err(format!("workout record answered {s}: {v}"));
    }
    let samples = json!([
        {"kind": "stepCount", "value": 4200.0, "start": "2025-05-06T11:05:00Z", "end": "2025-05-06T11:30:00Z", "sourceId": "watch"},
        {"kind": "exerciseTime", "value": 25.0, "start": "2025-05-06T11:05:00Z", "end": "2025-05-06T11:30:00Z", "sourceId": "watch"}
    ]);
    let (s, v) = call(&app, "POST", "/v1/health/samples", samples).await;
    if s != 200 {
        return Err(format!("health batch answered {s}: {v}"));
    }

    h.clock.set("2025-05-08T12:00:00Z".parse().unwrap());
    let (_, plan) = call(&app, "GET", "/v1/plans/2025-05-05", json!({})).await;
    let thursday = plan["workouts"]
        .as_array()
        .and_then(|ws| {
            ws.iter().find(|w| {
                w["scheduledStart"]
                    .as_str()
                    .is_some_and(|t| t.starts_with("2025-05-08"))
            })
        })
        .and_then(|w| w["id"].as_str())
        .ok_or_else(|| format!("no Thursday workout in {plan}"))?
        .to_string();
    let (s, v) = call(
        &app,
        "PUT",
        &format!("/v1/plans/2025-05-05/workouts/{thursday}/complete"),
        json!({}),
    )
    .await;
    if s != 200 {
        return Err(format!("mark complete answered {s}: {v}"));
    }

    // Hourly ticks through the end of the week and into the next one.
    let mut at: DateTime<Utc> = "2025-05-08T13:00:00Z".parse().unwrap();
    let until: DateTime<Utc> = "2025-05-13T12:00:00Z".parse().unwrap();
    while at <= until {
        h.clock.set(at);
        let state = h.state.clone();
        tokio::task::block_in_place(|| bloom_service::server::tick_all(&state));
        at += chrono::Duration::hours(1);
    }
    let before = snapshot_json(&h.state)?;
    let snap: serde_json::Value = serde_json::from_str(&before.0).map_err(|e| e.to_string())?;
    let garden_events = snap["gardenEvents"].as_array().map_or(0, Vec::len);
    if garden_events < 3 {
        return Err(format!("expected progress, critters and a week rollover in the garden log, got {garden_events} events"));
    }
    if h.sink.delivered().is_empty() {
        return Err("no notifications were delivered".into());
    }
    drop(app);
    drop(h);

    let restarted = harness(open()?, until);
    let loaded = restarted.state.load_all().map_err(|e| e.to_string())?;
    if loaded != 1 {
        return Err(format!("expected one stored user, loaded {loaded}"));
    }
    let after = snapshot_json(&restarted.state)?;
    if before.0 != after.0 {
        return Err("reloaded workspace differs from the one before restart".into());
    }
    if before.1 != after.1 {
        return Err("reloaded garden descriptor differs".into());
    }
    Ok(())
}
