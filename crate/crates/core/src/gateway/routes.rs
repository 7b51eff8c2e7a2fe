use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, Path, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tokio_stream::wrappers::ReceiverStream;

use super::{admin, ui_config, AppState, GatewayError, ImageUpload, Session, TurnEvent, TurnInput};
use crate::domain::{Condition, Conversation, ConversationId};
use crate::experiment::{Answers, Phase, QuestionnaireResponse, QuestionnaireSchema};
use crate::store::ConversationHeader;

pub const SESSION_HEADER: &str = "x-session-token";

/// The caller's session, from `Authorization: Bearer <token>` or
/// `X-Session-Token`.
pub struct AuthSession(pub Session);

impl FromRequestParts<Arc<AppState>> for AuthSession {
    type Rejection = GatewayError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, Self::Rejection> {
        let token = bearer(&parts.headers).ok_or(GatewayError::Unauthorized)?;
        Ok(AuthSession(state.sessions.authenticate(token)?))
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    if let Some(v) = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) {
        return v.strip_prefix("Bearer ").map(str::trim).filter(|t| !t.is_empty());
    }
    headers.get(SESSION_HEADER).and_then(|v| v.to_str().ok()).map(str::trim).filter(|t| !t.is_empty())
}

pub fn router(state: Arc<AppState>) -> Router {
    // Room for a base64-encoded image at the store's cap plus the text.
    let body_limit = (state.store.config().max_image_bytes as usize).saturating_mul(4) / 3 + 64 * 1024;
    let messages = Router::new()
        .route("/api/conversations/{id}/messages", post(post_message))
        .route("/api/messages", post(post_message_new))
        .layer(DefaultBodyLimit::max(body_limit));
    let mut app = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/current", get(current_session))
        .route("/api/sessions/current/walkthrough", post(complete_walkthrough))
        .route("/api/ui-config", get(get_ui_config))
        .route("/api/conversations", post(create_conversation))
        .route("/api/conversations/{id}", get(get_conversation))
        .route("/api/questionnaires/{phase}", get(get_questionnaire).post(submit_questionnaire))
        .route("/api/admin/eval/run", post(admin::eval_run))
        .route("/api/admin/stats/{kind}", get(admin::stats))
        .route("/api/admin/export/{kind}", get(admin::export))
        .merge(messages);
    if let Some(dir) = &state.options.static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    app.with_state(state)
}

#[derive(Debug, Default, Deserialize)]
struct CreateSessionRequest {
    /// Researcher override; needs the admin token.
    condition: Option<Condition>,
}

#[derive(Debug, Serialize)]
struct CreatedSession {
    token: String,
    #[serde(flatten)]
    session: Session,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<(StatusCode, Json<CreatedSession>), GatewayError> {
    let req: CreateSessionRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSessionRequest::default()
    } else {
        let value: serde_json::Value =
            serde_json::from_slice(&body).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        match value.get("condition") {
            Some(c) if !c.is_null() => CreateSessionRequest {
                condition: Some(
                    serde_json::from_value(c.clone()).map_err(|e| GatewayError::InvalidCondition(condition_error(e)))?,
                ),
            },
            _ => CreateSessionRequest::default(),
        }
    };
    if req.condition.is_some() {
        state.require_admin(&headers)?;
    }
    let s = state.clone();
    let (token, session) = super::blocking(move || s.sessions.create(req.condition)).await?;
    Ok((StatusCode::CREATED, Json(CreatedSession { token: token.as_str().to_owned(), session })))
}

fn condition_error(e: serde_json::Error) -> crate::domain::DomainError {
    crate::domain::DomainError::Parse { kind: "condition", value: e.to_string() }
}

async fn current_session(AuthSession(session): AuthSession) -> Json<Session> {
    Json(session)
}

async fn complete_walkthrough(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
) -> Result<Json<Session>, GatewayError> {
    Ok(Json(state.sessions.complete_walkthrough(&session.session_id)?))
}

async fn get_ui_config(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
) -> Json<super::UiConfig> {
    Json(ui_config(&state.ui, session.condition, session.walkthrough_done, state.store.config().max_image_bytes))
}

async fn create_conversation(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
) -> Result<(StatusCode, Json<ConversationHeader>), GatewayError> {
    let store = state.store.clone();
    let header = super::blocking(move || Ok(store.create_conversation(session.session_id, session.condition)?)).await?;
    Ok((StatusCode::CREATED, Json(header)))
}

async fn get_conversation(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
    Path(id): Path<String>,
) -> Result<Json<Conversation>, GatewayError> {
    let id = ConversationId::from(id);
    state.owned_conversation(&session, &id)?;
    Ok(Json(state.store.conversation(&id)?))
}

#[derive(Debug, Deserialize)]
struct JsonImage {
    media_type: String,
    /// Base64 (standard alphabet).
    data: String,
}

#[derive(Debug, Deserialize)]
struct JsonMessage {
    #[serde(default)]
    text: String,
    #[serde(default)]
    image: Option<JsonImage>,
    #[serde(default)]
    conversation_id: Option<String>,
}

fn too_large_or_bad(status: StatusCode, detail: String) -> GatewayError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        GatewayError::PayloadTooLarge(detail)
    } else {
        GatewayError::BadRequest(detail)
    }
}

/// JSON (`{text, image: {media_type, data}}`) or multipart with `text`,
/// `image` and optional `conversation_id` parts.
async fn read_turn(req: Request) -> Result<(TurnInput, Option<ConversationId>), GatewayError> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if is_multipart {
        let mut mp = Multipart::from_request(req, &()).await.map_err(|e| too_large_or_bad(e.status(), e.body_text()))?;
        let mut input = TurnInput::default();
        let mut conversation = None;
        while let Some(field) = mp.next_field().await.map_err(|e| too_large_or_bad(e.status(), e.body_text()))? {
            let name = field.name().unwrap_or_default().to_owned();
            match name.as_str() {
                "text" => input.text = field.text().await.map_err(|e| too_large_or_bad(e.status(), e.body_text()))?,
                "conversation_id" => {
                    conversation =
                        Some(field.text().await.map_err(|e| too_large_or_bad(e.status(), e.body_text()))?.into())
                }
                "image" => {
                    let media_type = field.content_type().unwrap_or("application/octet-stream").to_owned();
                    let bytes = field.bytes().await.map_err(|e| too_large_or_bad(e.status(), e.body_text()))?;
                    if !bytes.is_empty() {
                        input.image = Some(ImageUpload { bytes: bytes.to_vec(), media_type });
                    }
                }
                other => return Err(GatewayError::BadRequest(format!("unexpected form field {other:?}"))),
            }
        }
        return Ok((input, conversation));
    }
    let Json(body) = Json::<JsonMessage>::from_request(req, &())
        .await
        .map_err(|e| too_large_or_bad(e.status(), e.body_text()))?;
    let image = match body.image {
        Some(img) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(img.data.as_bytes())
                .map_err(|e| GatewayError::BadRequest(format!("image data is not base64: {e}")))?;
            Some(ImageUpload { bytes, media_type: img.media_type })
        }
        None => None,
    };
    Ok((TurnInput { text: body.text, image }, body.conversation_id.map(ConversationId::from)))
}

fn sse_event(event: TurnEvent) -> Event {
    let (name, data) = match event {
        TurnEvent::Chunk(text) => ("chunk", serde_json::json!({ "text": text })),
        TurnEvent::Error { message, detail } => ("error", serde_json::json!({ "message": message, "detail": detail })),
        TurnEvent::Done(done) => ("done", serde_json::to_value(done).unwrap_or_default()),
    };
    Event::default().event(name).data(data.to_string())
}

async fn stream_turn(
    state: Arc<AppState>,
    session: Session,
    conversation: Option<ConversationId>,
    input: TurnInput,
) -> Result<Response, GatewayError> {
    let (conversation_id, rx) = state.start_turn(&session, conversation, input).await?;
    let events = ReceiverStream::new(rx).map(|e| Ok::<_, Infallible>(sse_event(e)));
    let mut response = Sse::new(events).keep_alive(KeepAlive::default()).into_response();
    if let Ok(v) = HeaderValue::from_str(conversation_id.as_str()) {
        response.headers_mut().insert("x-conversation-id", v);
    }
    Ok(response)
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
    Path(id): Path<String>,
    req: Request,
) -> Result<Response, GatewayError> {
    let (input, _) = read_turn(req).await?;
    stream_turn(state, session, Some(ConversationId::from(id)), input).await
}

/// Same as [`post_message`]; starts a new conversation unless the body
/// names one.
async fn post_message_new(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
    req: Request,
) -> Result<Response, GatewayError> {
    let (input, conversation) = read_turn(req).await?;
    stream_turn(state, session, conversation, input).await
}

async fn get_questionnaire(
    State(state): State<Arc<AppState>>,
    AuthSession(_): AuthSession,
    Path(phase): Path<String>,
) -> Result<Json<QuestionnaireSchema>, GatewayError> {
    let phase: Phase = phase.parse().map_err(|_| GatewayError::NotFound(format!("phase {phase}")))?;
    Ok(Json(state.study.schema(phase).clone()))
}

#[derive(Debug, Deserialize)]
struct SubmitRequest {
    answers: Answers,
}

async fn submit_questionnaire(
    State(state): State<Arc<AppState>>,
    AuthSession(session): AuthSession,
    Path(phase): Path<String>,
    body: Result<Json<SubmitRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<QuestionnaireResponse>), GatewayError> {
    let phase: Phase = phase.parse().map_err(|_| GatewayError::NotFound(format!("phase {phase}")))?;
    let Json(body) = body.map_err(|e| GatewayError::SchemaViolation(e.body_text()))?;
    let s = state.clone();
    let response = super::blocking(move || s.submit_questionnaire(&session, phase, body.answers)).await?;
    Ok((StatusCode::CREATED, Json(response)))
}
