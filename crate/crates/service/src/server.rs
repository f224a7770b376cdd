//! Router assembly and the background notification ticker.

use std::sync::Arc;
use std::time::Duration;

use axum::routing::get;
use axum::Router;

use crate::app::{lock, AppState};
use crate::rest;
use crate::ws;

pub fn router(state: Arc<AppState>) -> Router {
    rest::routes()
        .route("/v1/chat", get(ws::chat_upgrade))
        .with_state(state)
}

/// Advances every loaded user to the current time: sweeps, garden sync and
/// due notifications. Returns how many notifications went out.
pub fn tick_all(state: &AppState) -> usize {
    let now = state.now();
    let mut sent = 0;
    for (user, entry) in state.loaded_users() {
        let mut guard = lock(&entry);
        let records = guard.workspace.tick(
            &state.coach,
            state.provider.as_ref(),
            state.sink.as_ref(),
            now,
        );
        sent += records.len();
        if let Err(e) = state.persist(&guard) {
            tracing::error!(user, error = %e, "persisting after a tick failed");
        }
    }
    sent
}

/// Runs [`tick_all`] on a fixed interval until the task is dropped.
pub async fn run_ticker(state: Arc<AppState>, every: Duration) {
    let mut interval = tokio::time::interval(every);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let s = state.clone();
        match tokio::task::spawn_blocking(move || tick_all(&s)).await {
            Ok(n) if n > 0 => tracing::info!(sent = n, "notifications delivered"),
            Ok(_) => {}
            Err(e) => tracing::error!(error = %e, "notification tick panicked"),
        }
    }
}
