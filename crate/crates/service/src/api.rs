//! REST and WebSocket routes.
//!
//! | method | path                   | body            | reply                 |
//! |--------|------------------------|-----------------|-----------------------|
//! | POST   | `/sessions`            | `CreateSession` | 201 `SessionView`     |
//! | GET    | `/sessions/{id}`       |                 | 200 `SessionView`     |
//! | DELETE | `/sessions/{id}`       |                 | 204                   |
//! | POST   | `/sessions/{id}/intent`| `IntentRequest` | 200 `TrialUpdate`     |
//! | GET    | `/sessions/{id}/ws`    | upgrade         | `TrialUpdate` stream  |
//!
//! Errors are JSON `{"error": ..., "fields": [{"field", "message"}]}`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use navspell_core::graph::ActionClass;
use serde::{Deserialize, Serialize};

use crate::session::{CreateSession, FieldError, IntentError, ServiceConfig, Session, TrialUpdate};

type Shared = Arc<Mutex<Session>>;

/// Session registry plus the shared configuration.
#[derive(Clone)]
pub struct AppState {
    config: ServiceConfig,
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentRequest {
    pub action: ActionClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>, fields: Vec<FieldError>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                fields,
            },
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session {id}"), Vec::new())
    }

    fn from_rejection(r: JsonRejection) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid payload",
            vec![FieldError {
                field: "body".into(),
                message: r.body_text(),
            }],
        )
    }
}

impl From<IntentError> for ApiError {
    fn from(e: IntentError) -> Self {
        match e {
            IntentError::Inadmissible(..) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "inadmissible action",
                vec![FieldError {
                    field: "action".into(),
                    message: e.to_string(),
                }],
            ),
            IntentError::Decode(err) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string(), Vec::new()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show).delete(remove))
        .route("/sessions/{id}/intent", post(intent))
        .route("/sessions/{id}/ws", get(socket))
        .with_state(state)
}

async fn create(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body.map_err(ApiError::from_rejection)?;
    let settings = req
        .validate(&app.config.epoch)
        .map_err(|fields| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid session settings", fields))?;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let config = app.config.clone();
    let session_id = id.clone();
    let session = tokio::task::spawn_blocking(move || Session::new(session_id, settings, config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()))?;
    let view = session.view();
    app.sessions
        .lock()
        .expect("registry lock")
        .insert(id, Arc::new(Mutex::new(session)));
    log::info!("created session {}", view.id);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn show(State(app): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let session = app.get(&id)?;
    let view = session.lock().expect("session lock").view();
    Ok(Json(view))
}

async fn remove(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.lock().expect("registry lock").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

fn apply(session: &Shared, action: ActionClass) -> Result<TrialUpdate, ApiError> {
    Ok(session.lock().expect("session lock").intent(action)?)
}

async fn intent(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<IntentRequest>, JsonRejection>,
) -> Result<Json<TrialUpdate>, ApiError> {
    let session = app.get(&id)?;
    let Json(req) = body.map_err(ApiError::from_rejection)?;
    Ok(Json(apply(&session, req.action)?))
}

async fn socket(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let session = app.get(&id)?;
    Ok(ws.on_upgrade(move |socket| drive(socket, session)))
}

/// Each text frame `{"action": ...}` is answered with a `TrialUpdate`, or an
/// `ErrorBody` if the frame is malformed or the action is refused.
async fn drive(mut socket: WebSocket, session: Shared) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<IntentRequest>(&text) {
            Ok(req) => match apply(&session, req.action) {
                Ok(update) => serde_json::to_string(&update),
                Err(e) => serde_json::to_string(&e.body),
            },
            Err(e) => serde_json::to_string(&ErrorBody {
                error: "invalid message".into(),
                fields: vec![FieldError {
                    field: "action".into(),
                    message: e.to_string(),
                }],
            }),
        };
        let reply = reply.expect("wire types serialize");
        if socket.send(Message::Text(reply.into())).await.is_err() {
            break;
        }
    }
}
