//! REST resources. Every handler takes [`Authed`] as its first extractor,
//! so the bearer token is checked before any body parsing or store access.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use bloom_core::health::{
    parse_reference_date, AggregationLevel, AggregationQuery, HealthError, SampleKind,
};
use bloom_core::notify::NotificationPrefs;
use bloom_core::plan::{
    compute_completion_rate, plan_balance_score, propose_progression, unique_activity_count,
    ActivityType, EditActor, Intensity, PlanError, WeeklyPlan, WorkoutPatch, WorkoutRecord,
    WorkoutSpec,
};
use bloom_core::workspace::{ContentMode, WorkspaceError};
use chrono::{NaiveDate, NaiveDateTime};
use chrono_tz::Tz;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::app::{lock, AppState, UserEntry};
use crate::auth::{AuthError, TokenEntry};
use crate::store::{save_health_samples, StoreError};
use crate::usage::{daily_screen_usage, UsageError, UsageEvent, UsageEventInput};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "notFound", message)
    }

    fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, message = %self.message, "request failed");
        }
        let mut resp = (
            self.status,
            Json(json!({ "error": { "code": self.code, "message": self.message } })),
        )
            .into_response();
        if self.status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(
                header::WWW_AUTHENTICATE,
                header::HeaderValue::from_static("Bearer"),
            );
        }
        resp
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<PlanError> for ApiError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::NotFound(_) => Self::not_found(e.to_string()),
            PlanError::NoPlan(_) => Self::not_found(e.to_string()),
            PlanError::AlreadyCompleted(_) => {
                Self::new(StatusCode::CONFLICT, "plan.alreadyCompleted", e.to_string())
            }
            PlanError::Invalid(_) => Self::invalid("plan.invalid", e.to_string()),
            PlanError::UndefinedProgress => Self::invalid("plan.undefinedProgress", e.to_string()),
            PlanError::InvalidRecord { .. } => {
                Self::invalid("workout.invalidRecord", e.to_string())
            }
        }
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::Plan(p) => p.into(),
            WorkspaceError::NoPlan(_) => Self::not_found(e.to_string()),
            WorkspaceError::WeekMismatch { .. } => {
                Self::invalid("plan.weekMismatch", e.to_string())
            }
            WorkspaceError::Garden(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<HealthError> for ApiError {
    fn from(e: HealthError) -> Self {
        Self::invalid("health.query", e.to_string())
    }
}

impl From<UsageError> for ApiError {
    fn from(e: UsageError) -> Self {
        Self::invalid("usage.invalid", e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), "request.body", e.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "request.path", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "request.query", e.body_text())
    }
}

/// The authenticated caller. Extraction only consults the token registry.
#[derive(Debug, Clone)]
pub struct Authed(pub TokenEntry);

impl FromRequestParts<Arc<AppState>> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &Arc<AppState>,
    ) -> Result<Self, Self::Rejection> {
        let header = parts
            .headers
            .get(header::AUTHORIZATION)
            .map(|v| v.to_str().unwrap_or(""));
        let entry = state.registry.authenticate(header, state.now())?;
        Ok(Authed(entry.clone()))
    }
}

/// Runs `f` on a blocking thread under the user's lock.
async fn with_user<T, F>(state: Arc<AppState>, token: TokenEntry, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState, &mut UserEntry) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let entry = state.entry(&token)?;
        let mut guard = lock(&entry);
        f(&state, &mut guard)
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Like [`with_user`], persisting the workspace when `f` succeeds.
async fn with_user_mut<T, F>(state: Arc<AppState>, token: TokenEntry, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState, &mut UserEntry) -> Result<T, ApiError> + Send + 'static,
{
    with_user(state, token, |state, entry| {
        let out = f(state, entry)?;
        state.persist(entry)?;
        Ok(out)
    })
    .await
}

fn plan_of(entry: &UserEntry, week: NaiveDate) -> Result<&WeeklyPlan, ApiError> {
    entry
        .workspace
        .plans
        .get(week)
        .ok_or_else(|| ApiError::not_found(format!("no plan for the week of {week}")))
}

fn plan_json(entry: &UserEntry, week: NaiveDate) -> Result<Value, ApiError> {
    Ok(plan_of(entry, week)?.to_canonical_value())
}

type ApiResult = Result<Json<Value>, ApiError>;

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response types serialize")
}

async fn get_me(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |_, e| Ok(Json(to_json(&e.workspace.profile)))).await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PreferencesBody {
    #[serde(default)]
    display_name: Option<String>,
    #[serde(default)]
    timezone: Option<Tz>,
    #[serde(default)]
    notification_prefs: Option<NotificationPrefs>,
    #[serde(default)]
    content_mode: Option<ContentMode>,
}

async fn put_preferences(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    body: Result<Json<PreferencesBody>, JsonRejection>,
) -> ApiResult {
    let Json(body) = body?;
    with_user_mut(state, token, move |state, e| {
        let profile = &mut e.workspace.profile;
        if let Some(n) = body.display_name {
            profile.display_name = n;
        }
        if let Some(tz) = body.timezone {
            profile.timezone = tz;
        }
        if let Some(p) = body.notification_prefs {
            profile.notification_prefs = p;
        }
        if let Some(m) = body.content_mode {
            profile.content_mode = m;
        }
        e.workspace.refresh(state.now());
        Ok(Json(to_json(&e.workspace.profile)))
    })
    .await
}

async fn list_plans(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |_, e| {
        Ok(Json(Value::Array(
            e.workspace
                .plans
                .iter()
                .map(WeeklyPlan::to_canonical_value)
                .collect(),
        )))
    })
    .await
}

async fn current_plan(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |state, e| {
        e.workspace
            .current_plan(state.now())
            .map(|p| Json(p.to_canonical_value()))
            .ok_or_else(|| ApiError::not_found("no plan covers the current week"))
    })
    .await
}

async fn get_plan(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    week: Result<Path<NaiveDate>, PathRejection>,
) -> ApiResult {
    let Path(week) = week?;
    with_user(state, token, move |_, e| Ok(Json(plan_json(e, week)?))).await
}

async fn put_plan(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    week: Result<Path<NaiveDate>, PathRejection>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult {
    let Path(week) = week?;
    let Json(body) = body?;
    let plan = WeeklyPlan::from_json(&body.to_string())
        .map_err(|e| ApiError::invalid("plan.invalid", e.to_string()))?;
    if plan.week_start != week {
        return Err(WorkspaceError::WeekMismatch {
            expected: week,
            found: plan.week_start,
        }
        .into());
    }
    with_user_mut(state, token, move |state, e| {
        e.workspace.put_plan(plan, EditActor::UserUi, state.now())?;
        Ok(Json(plan_json(e, week)?))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NewWorkout {
    activity: ActivityType,
    intensity: Intensity,
    scheduled_start: NaiveDateTime,
    duration_min: u32,
}

async fn add_workout(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    week: Result<Path<NaiveDate>, PathRejection>,
    body: Result<Json<NewWorkout>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Path(week) = week?;
    let Json(body) = body?;
    with_user_mut(state, token, move |state, e| {
        let plan = e
            .workspace
            .plans
            .get_mut(week)
            .ok_or(WorkspaceError::NoPlan(week))?;
        let id = plan.next_workout_id();
        let spec = WorkoutSpec::upcoming(
            id,
            body.activity,
            body.intensity,
            body.scheduled_start,
            body.duration_min,
        );
        e.workspace
            .add_workout(week, spec, EditActor::UserUi, state.now())?;
        Ok((StatusCode::CREATED, Json(plan_json(e, week)?)))
    })
    .await
}

async fn modify_workout(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    path: Result<Path<(NaiveDate, String)>, PathRejection>,
    body: Result<Json<WorkoutPatch>, JsonRejection>,
) -> ApiResult {
    let Path((week, id)) = path?;
    let Json(patch) = body?;
    with_user_mut(state, token, move |state, e| {
        e.workspace
            .modify_workout(week, &id, &patch, EditActor::UserUi, state.now())?;
        Ok(Json(plan_json(e, week)?))
    })
    .await
}

async fn delete_workout(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    path: Result<Path<(NaiveDate, String)>, PathRejection>,
) -> ApiResult {
    let Path((week, id)) = path?;
    with_user_mut(state, token, move |state, e| {
        e.workspace
            .delete_workout(week, &id, EditActor::UserUi, state.now())?;
        Ok(Json(plan_json(e, week)?))
    })
    .await
}

async fn complete_workout(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    path: Result<Path<(NaiveDate, String)>, PathRejection>,
) -> ApiResult {
    let Path((week, id)) = path?;
    with_user_mut(state, token, move |state, e| {
        e.workspace
            .mark_complete(week, &id, EditActor::UserUi, state.now())?;
        Ok(Json(plan_json(e, week)?))
    })
    .await
}

async fn plan_metrics(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    week: Result<Path<NaiveDate>, PathRejection>,
) -> ApiResult {
    let Path(week) = week?;
    with_user(state, token, move |_, e| {
        let plan = plan_of(e, week)?;
        let minutes = e
            .workspace
            .health
            .weekly_guideline_minutes(week, e.workspace.profile.timezone)
            .minutes;
        Ok(Json(json!({
            "weekStart": week,
            "completionRate": compute_completion_rate(plan).ok(),
            "balanceScore": plan_balance_score(plan),
            "uniqueActivityCount": unique_activity_count(plan),
            "edits": {
                "userUi": plan.edit_count(EditActor::UserUi),
                "agentTool": plan.edit_count(EditActor::AgentTool),
                "system": plan.edit_count(EditActor::System),
            },
            "progression": propose_progression(plan, minutes),
        })))
    })
    .await
}

async fn get_garden(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |_, e| {
        Ok(Json(to_json(&e.workspace.garden_descriptor())))
    })
    .await
}

async fn post_health_samples(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    body: Result<Json<Vec<Value>>, JsonRejection>,
) -> ApiResult {
    let Json(batch) = body?;
    with_user(state, token, move |state, e| {
        let report = e.workspace.ingest_health(&batch);
        save_health_samples(state.store.as_ref(), e.workspace.user_id(), &report.stored)?;
        Ok(Json(to_json(&report)))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct HealthQueryParams {
    sample_type: String,
    #[serde(default = "today")]
    reference_date: String,
    #[serde(default = "day")]
    aggregation_level: String,
    #[serde(default)]
    show_user: bool,
}

fn today() -> String {
    "today".into()
}
fn day() -> String {
    "day".into()
}

async fn health_query(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    params: Result<Query<HealthQueryParams>, QueryRejection>,
) -> ApiResult {
    let Query(p) = params?;
    let sample_type: SampleKind = p.sample_type.parse()?;
    let aggregation_level: AggregationLevel = p.aggregation_level.parse()?;
    with_user(state, token, move |state, e| {
        let tz = e.workspace.profile.timezone;
        let reference_date = parse_reference_date(&p.reference_date, state.now(), tz)?;
        let q = AggregationQuery {
            sample_type,
            reference_date,
            aggregation_level,
            show_user: p.show_user,
        };
        Ok(Json(to_json(&e.workspace.health.query(&q, tz))))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GuidelineParams {
    week_start: NaiveDate,
}

async fn health_guideline(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    params: Result<Query<GuidelineParams>, QueryRejection>,
) -> ApiResult {
    let Query(p) = params?;
    with_user(state, token, move |_, e| {
        Ok(Json(to_json(&e.workspace.health.weekly_guideline_minutes(
            p.week_start,
            e.workspace.profile.timezone,
        ))))
    })
    .await
}

async fn post_workout_record(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    body: Result<Json<WorkoutRecord>, JsonRejection>,
) -> ApiResult {
    let Json(record) = body?;
    with_user_mut(state, token, move |state, e| {
        let decision = e.workspace.ingest_workout_record(record, state.now())?;
        Ok(Json(to_json(&decision)))
    })
    .await
}

async fn get_notifications(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |_, e| {
        let n = &e.workspace.notifications;
        Ok(Json(json!({
            "records": n.records(),
            "pending": n.pending(),
        })))
    })
    .await
}

async fn post_usage(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    body: Result<Json<UsageEventInput>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(input) = body?;
    let event = UsageEvent::validate(input, &token.user_id)?;
    with_user(state, token, move |state, e| {
        state.append_usage(e, event.clone())?;
        Ok((StatusCode::CREATED, Json(to_json(&event))))
    })
    .await
}

async fn usage_daily(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |_, e| {
        Ok(Json(to_json(&daily_screen_usage(
            &e.usage,
            e.workspace.profile.timezone,
        ))))
    })
    .await
}

async fn list_sessions(State(state): State<Arc<AppState>>, Authed(token): Authed) -> ApiResult {
    with_user(state, token, |_, e| {
        let s = &e.workspace.sessions;
        let rows: Vec<Value> = s
            .ended
            .iter()
            .chain(s.active.iter())
            .map(|c| {
                json!({
                    "sessionId": c.session_id,
                    "mode": c.mode,
                    "state": c.state,
                    "startedAt": c.started_at,
                    "endedAt": c.ended_at,
                    "active": c.ended_at.is_none(),
                    "turns": c.turns.len(),
                })
            })
            .collect();
        Ok(Json(Value::Array(rows)))
    })
    .await
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    id: Result<Path<String>, PathRejection>,
) -> ApiResult {
    let Path(id) = id?;
    with_user(state, token, move |_, e| {
        e.workspace
            .sessions
            .find(&id)
            .map(|s| Json(to_json(s)))
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DeviceBody {
    token: String,
}

async fn register_device(
    State(state): State<Arc<AppState>>,
    Authed(token): Authed,
    body: Result<Json<DeviceBody>, JsonRejection>,
) -> ApiResult {
    let Json(body) = body?;
    if body.token.trim().is_empty() {
        return Err(ApiError::invalid("device.token", "device token is empty"));
    }
    with_user(state, token, move |state, e| {
        let added =
            state
                .devices
                .register(state.store.as_ref(), e.workspace.user_id(), &body.token)?;
        Ok(Json(json!({ "registered": added })))
    })
    .await
}

/// Every REST route; all of them require a bearer token.
pub fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/v1/me", get(get_me))
        .route("/v1/me/preferences", put(put_preferences))
        .route("/v1/plans", get(list_plans))
        .route("/v1/plans/current", get(current_plan))
        .route("/v1/plans/{week}", get(get_plan).put(put_plan))
        .route("/v1/plans/{week}/metrics", get(plan_metrics))
        .route("/v1/plans/{week}/workouts", post(add_workout))
        .route(
            "/v1/plans/{week}/workouts/{id}",
            axum::routing::patch(modify_workout).delete(delete_workout),
        )
        .route(
            "/v1/plans/{week}/workouts/{id}/complete",
            put(complete_workout),
        )
        .route("/v1/garden", get(get_garden))
        .route("/v1/health/samples", post(post_health_samples))
        .route("/v1/health/query", get(health_query))
        .route("/v1/health/guideline", get(health_guideline))
        .route("/v1/workouts", post(post_workout_record))
        .route("/v1/notifications", get(get_notifications))
        .route("/v1/usage", post(post_usage))
        .route("/v1/usage/daily", get(usage_daily))
        .route("/v1/sessions", get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/devices", post(register_device))
}
