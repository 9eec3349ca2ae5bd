//! HTTP endpoints. One in-memory session per server; every command on it goes
//! through a single lock, so requests observe a total order.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pika_core::compiler::{compile, render_source, CompileError};
use pika_core::engine::{Engine, EngineError, RawActionEvent, TraceRecord};
use pika_core::platform::{CommunityState, UserId};
use pika_core::policy::PolicyDocument;
use pika_core::registry::Registry;
use pika_core::scenario::{BallotInput, Command, VoteCommand};
use pika_core::validate::{global_variable_list, setting_options, validate_policy, Diagnostic};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};

/// Error body shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_owned(), message: message.into(), path: None, diagnostics: Vec::new() }
    }

    fn invalid(diagnostics: Vec<Diagnostic>) -> Self {
        let first = diagnostics.first().cloned();
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "InvalidPolicy".into(),
            message: first.as_ref().map_or_else(|| "policy is invalid".into(), |d| d.message.clone()),
            path: first.map(|d| d.path),
            diagnostics,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(error: EngineError) -> Self {
        let (status, code) = match &error {
            EngineError::DuplicateEvent(_) => (StatusCode::CONFLICT, "DuplicateEvent"),
            EngineError::UnknownActionKind(_) => (StatusCode::UNPROCESSABLE_ENTITY, "UnknownActionKind"),
            EngineError::MalformedFields { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "MalformedFields"),
            EngineError::UnknownProposal(_) => (StatusCode::NOT_FOUND, "UnknownProposal"),
            EngineError::ProposalClosed(_) => (StatusCode::CONFLICT, "ProposalClosed"),
            EngineError::IneligibleVoter { .. } => (StatusCode::FORBIDDEN, "IneligibleVoter"),
            EngineError::BallotFormMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "BallotFormMismatch"),
            EngineError::InvalidBallot(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidBallot"),
            EngineError::ClockRegression { .. } => (StatusCode::CONFLICT, "ClockRegression"),
            EngineError::DuplicatePolicy(_) => (StatusCode::CONFLICT, "DuplicatePolicy"),
            EngineError::UnknownPolicy(_) => (StatusCode::NOT_FOUND, "UnknownPolicy"),
            EngineError::StalePolicy { .. } => (StatusCode::CONFLICT, "StalePolicy"),
        };
        ApiError::new(status, code, error.to_string())
    }
}

impl From<CompileError> for ApiError {
    fn from(error: CompileError) -> Self {
        match error {
            CompileError::Invalid(diagnostics) => ApiError::invalid(diagnostics),
            other => ApiError::new(StatusCode::CONFLICT, "CompileError", other.to_string()),
        }
    }
}

fn body<T: serde::de::DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequestBody", e.to_string()))
}

struct Session {
    engine: Engine,
    documents: Vec<PolicyDocument>,
}

#[derive(Clone)]
pub struct AppState {
    registry: Arc<Registry>,
    session: Arc<Mutex<Session>>,
}

impl AppState {
    pub fn new(registry: Arc<Registry>, community: CommunityState, seed: u64) -> Self {
        let engine = Engine::new(registry.clone(), community, seed);
        Self { registry, session: Arc::new(Mutex::new(Session { engine, documents: Vec::new() })) }
    }

    fn session(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/library", get(library))
        .route("/community", get(community))
        .route("/policies/validate", post(validate))
        .route("/policies/options", post(options))
        .route("/policies", get(list_policies).post(add_policy))
        .route("/policies/{id}/compile", post(compile_policy))
        .route("/policies/{id}/enabled", post(set_enabled))
        .route("/session/events", post(submit_event))
        .route("/session/proposals", get(proposals))
        .route("/session/proposals/{id}/votes", post(vote))
        .route("/session/tick", post(tick))
        .route("/session/trace", get(trace))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint") })
        .with_state(state)
}

async fn library(State(state): State<AppState>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], state.registry.to_library_json()).into_response()
}

async fn community(State(state): State<AppState>) -> Json<JsonValue> {
    Json(json!(state.session().engine.community().snapshot()))
}

async fn validate(State(state): State<AppState>, bytes: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let doc: PolicyDocument = body(&bytes)?;
    let snapshot = state.session().engine.community().snapshot();
    let report = validate_policy(&doc, &state.registry, &snapshot);
    Ok(Json(json!({"diagnostics": report.diagnostics})))
}

/// Variables and community values a form can offer for each setting of a
/// draft.
async fn options(State(state): State<AppState>, bytes: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let doc: PolicyDocument = body(&bytes)?;
    let snapshot = state.session().engine.community().snapshot();
    Ok(Json(json!({
        "variables": global_variable_list(&doc, &state.registry),
        "settings": setting_options(&doc, &state.registry, &snapshot),
    })))
}

async fn list_policies(State(state): State<AppState>) -> Json<JsonValue> {
    let session = state.session();
    let enabled: Vec<bool> = session.engine.policies().map(|(_, on)| on).collect();
    let rows: Vec<JsonValue> = session
        .documents
        .iter()
        .zip(enabled)
        .map(|(doc, on)| json!({"document": doc, "enabled": on}))
        .collect();
    Json(json!(rows))
}

async fn add_policy(State(state): State<AppState>, bytes: Bytes) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let doc: PolicyDocument = body(&bytes)?;
    let mut session = state.session();
    let report = validate_policy(&doc, &state.registry, &session.engine.community().snapshot());
    if !report.is_empty() {
        return Err(ApiError::invalid(report.diagnostics));
    }
    let plan = compile(&doc, &state.registry)?;
    session.engine.add_policy(plan)?;
    if !doc.enabled {
        session.engine.set_policy_enabled(&doc.id, false)?;
    }
    let reply = json!({"id": doc.id, "enabled": doc.enabled});
    session.documents.push(doc);
    Ok((StatusCode::CREATED, Json(reply)))
}

fn stored(session: &Session, id: &str) -> Result<PolicyDocument, ApiError> {
    session
        .documents
        .iter()
        .find(|d| d.id == id)
        .cloned()
        .ok_or_else(|| EngineError::UnknownPolicy(id.to_owned()).into())
}

/// Rendered source of an installed policy; `text` is what `pika compile` prints.
async fn compile_policy(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<JsonValue>, ApiError> {
    let doc = stored(&state.session(), &id)?;
    let source = render_source(&doc, &state.registry)?;
    let mut reply = json!(source);
    reply["text"] = json!(source.to_string());
    Ok(Json(reply))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnabledRequest {
    enabled: bool,
}

async fn set_enabled(State(state): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let request: EnabledRequest = body(&bytes)?;
    let mut session = state.session();
    session.engine.set_policy_enabled(&id, request.enabled)?;
    if let Some(doc) = session.documents.iter_mut().find(|d| d.id == id) {
        doc.enabled = request.enabled;
    }
    Ok(Json(json!({"id": id, "enabled": request.enabled})))
}

fn records_since(engine: &Engine, start: usize) -> Json<JsonValue> {
    Json(json!({"records": engine.trace()[start..].to_vec()}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRequest {
    #[serde(default)]
    event_id: Option<String>,
    kind: String,
    #[serde(default)]
    fields: serde_json::Map<String, JsonValue>,
    /// Defaults to the session clock.
    #[serde(default)]
    at: Option<i64>,
}

/// Runs a session command. A refusal is recorded in the trace, as a scenario
/// run would record it, and returned as an error.
fn run_command(
    engine: &mut Engine,
    command: Command,
    apply: impl FnOnce(&mut Engine) -> Result<(), EngineError>,
) -> Result<Json<JsonValue>, ApiError> {
    let start = engine.trace().len();
    match apply(engine) {
        Ok(()) => Ok(records_since(engine, start)),
        Err(error) => {
            engine.record_rejection(serde_json::to_value(&command).expect("commands serialize"), &error);
            Err(error.into())
        }
    }
}

async fn submit_event(State(state): State<AppState>, bytes: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let request: EventRequest = body(&bytes)?;
    let mut session = state.session();
    let engine = &mut session.engine;
    let at = request.at.unwrap_or_else(|| engine.now());
    let raw = RawActionEvent { event_id: request.event_id, kind: request.kind, fields: request.fields };
    run_command(engine, Command::Action(raw.clone()), |engine| {
        let event = engine.parse_event(raw, at)?;
        engine.submit_event(event).map(drop)
    })
}

async fn proposals(State(state): State<AppState>) -> Json<JsonValue> {
    Json(json!(state.session().engine.proposals()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteRequest {
    voter: UserId,
    ballot: BallotInput,
    #[serde(default)]
    at: Option<i64>,
}

async fn vote(State(state): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let request: VoteRequest = body(&bytes)?;
    let mut session = state.session();
    let command = Command::Vote(VoteCommand { proposal: id.clone(), voter: request.voter.clone(), ballot: request.ballot.clone() });
    run_command(&mut session.engine, command, |engine| {
        if let Some(at) = request.at {
            engine.advance_clock(at)?;
        }
        engine.cast_vote(&id, &request.voter, request.ballot.into()).map(drop)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TickRequest {
    #[serde(default)]
    at: Option<i64>,
    #[serde(default)]
    advance_by: Option<i64>,
}

async fn tick(State(state): State<AppState>, bytes: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let request: TickRequest = if bytes.is_empty() { TickRequest { at: None, advance_by: None } } else { body(&bytes)? };
    let mut session = state.session();
    let engine = &mut session.engine;
    let at = match (request.at, request.advance_by) {
        (Some(_), Some(_)) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "BadRequestBody", "give `at` or `advance_by`, not both"))
        }
        (Some(at), None) => at,
        (None, by) => engine.now() + by.unwrap_or(0),
    };
    run_command(engine, Command::Tick, |engine| engine.tick(at).map(drop))
}

#[derive(Deserialize)]
struct TraceQuery {
    #[serde(default)]
    since: u64,
}

/// The trace as JSON lines, optionally only records after `since`.
async fn trace(State(state): State<AppState>, Query(query): Query<TraceQuery>) -> Response {
    let session = state.session();
    let records: Vec<TraceRecord> =
        session.engine.trace().iter().filter(|r| r.seq > query.since).cloned().collect();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], pika_core::engine::trace_to_jsonl(&records)).into_response()
}
