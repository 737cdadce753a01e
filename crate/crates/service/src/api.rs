use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskscope_core::evidence::{EvidenceEntry, EvidenceKind};
use riskscope_core::router::{
    build_context, fallback_answer, ChatClient, ChatRequest, Intent, ParsedCommand, Provenance, Route, ViewTag,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::answers::execute;
use crate::engine::{Engine, EngineError};
use crate::events::{EventKind, EventLog, InteractionEvent};
use crate::sessions::SessionStore;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub sessions: Arc<SessionStore>,
    pub log: Arc<EventLog>,
    pub client: Option<Arc<dyn ChatClient>>,
}

impl AppState {
    pub fn new(engine: Engine, log: EventLog, client: Option<Arc<dyn ChatClient>>) -> Self {
        Self {
            engine: Arc::new(engine),
            sessions: Arc::new(SessionStore::default()),
            log: Arc::new(log),
            client,
        }
    }
}

/// Uniform error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail,
            },
        }
    }

    fn session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("session {id} not found"),
            json!({ "session_id": id }),
        )
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::UnknownPatient(id) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_patient", message, json!({ "patient_id": id }))
            }
            EngineError::UnknownFeature(f) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_feature", message, json!({ "feature": f }))
            }
            EngineError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message, Value::Null),
            EngineError::Failed(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "engine_failure", message, Value::Null),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, EngineError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/patients/{id}", get(patient))
        .route("/patients/{id}/prediction", get(prediction))
        .route("/patients/{id}/importance", get(importance))
        .route("/patients/{id}/ranges", get(ranges))
        .route("/patients/{id}/recommendation", post(recommendation))
        .route("/evidence/{feature}", get(evidence))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/events", post(record_event))
        .route("/sessions/{id}/log", get(export_log))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint", Value::Null)
        })
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub artifacts: std::collections::BTreeMap<String, String>,
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        artifacts: s.engine.checksums.clone(),
    })
}

async fn patient(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<crate::engine::PatientView> {
    Ok(Json(s.engine.patient_view(id)?))
}

async fn prediction(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<crate::engine::Prediction> {
    Ok(Json(s.engine.prediction(id)?))
}

#[derive(Debug, Deserialize)]
struct SeedQuery {
    #[serde(default)]
    seed: u64,
}

async fn importance(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<SeedQuery>,
) -> ApiResult<crate::engine::ImportanceView> {
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.importance(id, q.seed)).await?))
}

async fn ranges(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<SeedQuery>,
) -> ApiResult<crate::engine::RangesView> {
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.ranges(id, q.seed)).await?))
}

#[derive(Debug, Default, Deserialize)]
pub struct RecommendationBody {
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct WithWarnings<T> {
    #[serde(flatten)]
    inner: T,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

async fn recommendation(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    body: Option<Json<RecommendationBody>>,
) -> Result<Response, ApiError> {
    let engine = s.engine.clone();
    let view = blocking(move || engine.recommendation(id)).await?;
    let mut warnings = Vec::new();
    if let Some(sid) = body.and_then(|Json(b)| b.session_id) {
        if s.sessions.get(&sid).is_none() {
            return Err(ApiError::session(&sid));
        }
        let (_, w) = s
            .log
            .append(&sid, EventKind::RecommendationRequested, json!({ "patient_id": id }));
        warnings.extend(w);
    }
    Ok(Json(WithWarnings { inner: view, warnings }).into_response())
}

#[derive(Debug, Deserialize)]
struct KindQuery {
    kind: Option<String>,
}

async fn evidence(
    State(s): State<AppState>,
    Path(feature): Path<String>,
    Query(q): Query<KindQuery>,
) -> ApiResult<EvidenceEntry> {
    let kind = match q.kind.as_deref() {
        None => EvidenceKind::Importance,
        Some(k) => k.parse().map_err(|m: String| {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_kind", m, json!({ "allowed": ["importance", "range"] }))
        })?,
    };
    Ok(Json(s.engine.evidence(&feature, kind)?.clone()))
}

#[derive(Debug, Default, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub patient_id: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub created_at: chrono::DateTime<chrono::Utc>,
}

async fn create_session(
    State(s): State<AppState>,
    body: Option<Json<CreateSession>>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let patient = body.and_then(|Json(b)| b.patient_id);
    if let Some(id) = patient {
        s.engine.record(id)?;
    }
    let session = s.sessions.create(patient, chrono::Utc::now());
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.id,
            created_at: session.created_at,
        }),
    ))
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatBody {
    pub text: String,
    /// Dashboard view shown while the query was typed.
    #[serde(default)]
    pub active_view: Option<ViewTag>,
    #[serde(default)]
    pub patient_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSummary {
    pub route: Route,
    pub intent: Option<Intent>,
    pub similarity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demoted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub answer: String,
    pub provenance: Provenance,
    pub route: RouteSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<ParsedCommand>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewTag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

async fn chat(
    State(s): State<AppState>,
    Path(sid): Path<String>,
    Json(body): Json<ChatBody>,
) -> ApiResult<ChatResponse> {
    let handle = s.sessions.get(&sid).ok_or_else(|| ApiError::session(&sid))?;
    // Held for the whole turn so one session's queries are answered in order.
    let mut session = handle.lock().await;
    if let Some(id) = body.patient_id {
        s.engine.record(id)?;
        session.current_patient = Some(id);
    }
    if let Some(tag) = body.active_view {
        session.active_view = tag;
    }
    let mut warnings = Vec::new();
    let (_, w) = s.log.append(&sid, EventKind::ChatQuery, json!({ "text": body.text }));
    warnings.extend(w);

    let decision = s.engine.router.route(&body.text, session.current_patient);
    let summary = RouteSummary {
        route: decision.route,
        intent: decision.intent,
        similarity: decision.similarity,
        demoted: decision.demoted.clone(),
    };
    let active = session.active_view;
    let mut response = match (decision.route, decision.command) {
        (Route::Grammar, Some(cmd)) => {
            let engine = s.engine.clone();
            let c = cmd.clone();
            let executed = tokio::task::spawn_blocking(move || execute(&engine, &c, active))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            match executed {
                Ok(ex) => {
                    if let Some(p) = ex.patient {
                        if s.engine.record(p).is_ok() {
                            session.current_patient = Some(p);
                        }
                    }
                    let (view, data) = ex.view.map_or((None, None), |(t, d)| (Some(t), Some(d)));
                    ChatResponse {
                        answer: ex.text,
                        provenance: Provenance::Engine,
                        route: summary,
                        command: Some(cmd),
                        view,
                        data,
                        evidence: ex.evidence,
                        cause: None,
                        warnings: Vec::new(),
                    }
                }
                Err(e) => ChatResponse {
                    answer: format!("I could not run that command: {e}."),
                    provenance: Provenance::Engine,
                    route: summary,
                    command: Some(cmd),
                    view: None,
                    data: None,
                    evidence: None,
                    cause: Some(e.to_string()),
                    warnings: Vec::new(),
                },
            }
        }
        _ => {
            let engine = s.engine.clone();
            let client = s.client.clone();
            let turns = session.turns.clone();
            let patient = session.current_patient;
            let query = body.text.clone();
            let answer = tokio::task::spawn_blocking(move || {
                let view = engine.active_view(active, patient);
                let record = patient.and_then(|p| engine.dataset.record(p));
                let pack = build_context(&turns, record.map(|r| (r, &engine.schema)), view, &engine.kb);
                let request = ChatRequest::new(pack, query);
                fallback_answer(client.as_deref(), &request)
            })
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
            ChatResponse {
                answer: answer.text,
                provenance: answer.provenance,
                route: summary,
                command: None,
                view: None,
                data: None,
                evidence: None,
                cause: answer.cause,
                warnings: Vec::new(),
            }
        }
    };
    session.push_turn(body.text.clone(), response.answer.clone());
    let (_, w) = s.log.append(
        &sid,
        EventKind::ChatAnswer,
        json!({
            "answer": response.answer,
            "provenance": response.provenance,
            "route": response.route,
        }),
    );
    warnings.extend(w);
    response.warnings = warnings;
    Ok(Json(response))
}

#[derive(Debug, Clone, Deserialize)]
pub struct EventBody {
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Value,
}

/// UI-reported events. `view_opened` with `{"view": tag}` also switches the
/// session's active view.
async fn record_event(
    State(s): State<AppState>,
    Path(sid): Path<String>,
    Json(body): Json<EventBody>,
) -> Result<Response, ApiError> {
    let handle = s.sessions.get(&sid).ok_or_else(|| ApiError::session(&sid))?;
    if matches!(body.kind, EventKind::ChatQuery | EventKind::ChatAnswer) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_event_kind",
            "chat events are recorded by the chat endpoint",
            json!({ "kind": body.kind }),
        ));
    }
    let mut session = handle.lock().await;
    if body.kind == EventKind::ViewOpened {
        if let Some(tag) = body.payload.get("view").and_then(|v| serde_json::from_value::<ViewTag>(v.clone()).ok()) {
            session.active_view = tag;
        }
    }
    let (event, warning) = s.log.append(&sid, body.kind, body.payload);
    Ok((
        StatusCode::CREATED,
        Json(WithWarnings {
            inner: event,
            warnings: warning.into_iter().collect(),
        }),
    )
        .into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LogExport {
    pub session_id: String,
    pub events: Vec<InteractionEvent>,
}

async fn export_log(State(s): State<AppState>, Path(sid): Path<String>) -> ApiResult<LogExport> {
    let log = s.log.clone();
    let id = sid.clone();
    let events = tokio::task::spawn_blocking(move || log.export(&id))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    // Sessions from before a restart are no longer in memory but their
    // events are still on disk.
    if events.is_empty() && s.sessions.get(&sid).is_none() {
        return Err(ApiError::session(&sid));
    }
    Ok(Json(LogExport { session_id: sid, events }))
}
