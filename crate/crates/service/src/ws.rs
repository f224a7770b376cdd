//! Websocket chat endpoint speaking the `bloom-proto/1` subprotocol.
//!
//! Browsers cannot set headers on websocket requests, so the token may also
//! arrive as the `access_token` query parameter. Either way it is checked
//! before the upgrade.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};

use crate::app::{lock, AppState};
use crate::auth::TokenEntry;
use crate::protocol::{route_frame, WireFrame, SUBPROTOCOL};
use crate::rest::ApiError;

pub async fn chat_upgrade(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
    upgrade: Result<WebSocketUpgrade, axum::extract::ws::rejection::WebSocketUpgradeRejection>,
) -> Response {
    let header_value = headers
        .get(header::AUTHORIZATION)
        .map(|v| v.to_str().unwrap_or(""));
    let now = state.now();
    let authed = match (header_value, query.get("access_token")) {
        (Some(h), _) => state.registry.authenticate(Some(h), now),
        (None, Some(t)) => state.registry.validate(t, now),
        (None, None) => state.registry.authenticate(None, now),
    };
    let token = match authed {
        Ok(t) => t.clone(),
        Err(e) => return ApiError::from(e).into_response(),
    };
    let upgrade = match upgrade {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    upgrade
        .protocols([SUBPROTOCOL])
        .on_upgrade(move |socket| serve_socket(state, token, socket))
}

async fn handle_text(
    state: &Arc<AppState>,
    token: &TokenEntry,
    text: String,
) -> Result<Vec<WireFrame>, String> {
    let state = state.clone();
    let token = token.clone();
    tokio::task::spawn_blocking(move || {
        let entry = state.entry(&token).map_err(|e| e.to_string())?;
        let mut guard = lock(&entry);
        Ok(route_frame(&state, &mut guard, &text))
    })
    .await
    .map_err(|e| e.to_string())?
}

async fn serve_socket(state: Arc<AppState>, token: TokenEntry, mut socket: WebSocket) {
    let user = token.user_id.clone();
    tracing::info!(user, "chat connected");
    while let Some(msg) = socket.recv().await {
        let text = match msg {
            Ok(Message::Text(t)) => t.to_string(),
            Ok(Message::Binary(b)) => String::from_utf8_lossy(&b).into_owned(),
            Ok(Message::Close(_)) => break,
            Ok(_) => continue,
            Err(e) => {
                tracing::debug!(user, error = %e, "socket receive failed");
                break;
            }
        };
        let frames = match handle_text(&state, &token, text).await {
            Ok(f) => f,
            Err(e) => {
                tracing::error!(user, error = %e, "frame handling failed");
                break;
            }
        };
        for frame in frames {
            let body = serde_json::to_string(&frame).expect("frames serialize");
            if socket.send(Message::Text(body.into())).await.is_err() {
                return;
            }
        }
    }
    tracing::info!(user, "chat disconnected");
}
