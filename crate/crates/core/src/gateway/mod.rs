//! HTTP gateway: experiment sessions, streamed chat turns with optional
//! image upload, interface configuration, questionnaires, and token-gated
//! researcher endpoints.

mod admin;
mod chat;
mod questionnaire;
mod routes;
mod session;
mod ui;

pub use chat::{ImageUpload, TurnDone, TurnEvent, TurnInput, APOLOGY};
pub use questionnaire::{participant_records, QuestionnaireBook, QUESTIONNAIRE_STREAM};
pub use routes::router;
pub use session::{
    read_sessions, Assignment, Clock, ManualClock, Session, SessionManager, SessionToken, SystemClock, SESSION_STREAM,
};
pub use ui::{persona_display, ui_config, MenuItem, PersonaDisplay, UiConfig, UiContent, WalkthroughStep};
pub use ui::{DEFAULT_SUGGESTIONS, MEAL_PLAN_TOOLTIP};

use std::path::PathBuf;
use std::sync::Arc;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use crate::backends::{BackendError, BackendRegistry};
use crate::config::{AppConfig, ConfigError};
use crate::dataset::DatasetError;
use crate::domain::DomainError;
use crate::eval::{EvalError, FoodLexicon};
use crate::experiment::{ExperimentError, Phase, StudyConfig};
use crate::store::{ConversationStore, StoreError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing or unknown session token")]
    Unauthorized,
    #[error("session expired")]
    SessionExpired,
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    InvalidCondition(DomainError),
    #[error("questionnaire rejected: {0}")]
    SchemaViolation(String),
    #[error("{0} questionnaire already submitted")]
    DuplicateSubmission(Phase),
    #[error("payload too large: {0}")]
    PayloadTooLarge(String),
    #[error("unsupported media type {0}")]
    UnsupportedMediaType(String),
    #[error("storage is full")]
    StorageFull,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Experiment(ExperimentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<StoreError> for GatewayError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => GatewayError::NotFound(format!("conversation {id}")),
            StoreError::TooLarge { size, limit } => {
                GatewayError::PayloadTooLarge(format!("{size} bytes exceeds the {limit}-byte limit"))
            }
            StoreError::UnsupportedMediaType(m) => GatewayError::UnsupportedMediaType(m),
            StoreError::Validation(e) => GatewayError::BadRequest(e.to_string()),
            StoreError::StorageFull => GatewayError::StorageFull,
            other => GatewayError::Internal(other.to_string()),
        }
    }
}

impl From<ExperimentError> for GatewayError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::SchemaViolation(m) => GatewayError::SchemaViolation(m),
            ExperimentError::DuplicateSubmission { phase } => GatewayError::DuplicateSubmission(phase),
            ExperimentError::InvalidCondition(d) => GatewayError::InvalidCondition(d),
            other => GatewayError::Experiment(other),
        }
    }
}

impl GatewayError {
    pub fn status(&self) -> StatusCode {
        match self {
            GatewayError::Unauthorized | GatewayError::SessionExpired => StatusCode::UNAUTHORIZED,
            GatewayError::Forbidden(_) => StatusCode::FORBIDDEN,
            GatewayError::NotFound(_) => StatusCode::NOT_FOUND,
            GatewayError::BadRequest(_) => StatusCode::BAD_REQUEST,
            GatewayError::InvalidCondition(_) | GatewayError::SchemaViolation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::DuplicateSubmission(_) => StatusCode::CONFLICT,
            GatewayError::PayloadTooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            GatewayError::UnsupportedMediaType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            GatewayError::StorageFull => StatusCode::INSUFFICIENT_STORAGE,
            GatewayError::Backend(_) => StatusCode::BAD_GATEWAY,
            GatewayError::Eval(EvalError::Invalid(_) | EvalError::Io(_) | EvalError::Jsonl(_))
            | GatewayError::Dataset(_) => StatusCode::BAD_REQUEST,
            GatewayError::Experiment(ExperimentError::InsufficientData(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::Eval(_) | GatewayError::Experiment(_) | GatewayError::Config(_) | GatewayError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    /// Stable machine-readable code for clients.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Unauthorized => "unauthorized",
            GatewayError::SessionExpired => "session_expired",
            GatewayError::Forbidden(_) => "forbidden",
            GatewayError::NotFound(_) => "not_found",
            GatewayError::BadRequest(_) => "bad_request",
            GatewayError::InvalidCondition(_) => "invalid_condition",
            GatewayError::SchemaViolation(_) => "schema_violation",
            GatewayError::DuplicateSubmission(_) => "duplicate_submission",
            GatewayError::PayloadTooLarge(_) => "payload_too_large",
            GatewayError::UnsupportedMediaType(_) => "unsupported_media_type",
            GatewayError::StorageFull => "storage_full",
            GatewayError::Backend(_) => "backend_error",
            GatewayError::Eval(_) => "eval_error",
            GatewayError::Dataset(_) => "dataset_error",
            GatewayError::Experiment(_) => "experiment_error",
            GatewayError::Config(_) => "config_error",
            GatewayError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({"error": self.code(), "message": self.to_string()}))).into_response()
    }
}

/// Runtime knobs of the gateway.
#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub history_window: usize,
    pub backend_timeout_ms: u64,
    pub admin_token: Option<String>,
    pub dataset_examples: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

/// Shared state behind every handler.
pub struct AppState {
    pub store: Arc<ConversationStore>,
    pub sessions: SessionManager,
    pub registry: BackendRegistry,
    pub ui: UiContent,
    pub study: StudyConfig,
    pub lexicon: FoodLexicon,
    pub questionnaires: QuestionnaireBook,
    pub options: GatewayOptions,
    turns: chat::TurnLocks,
}

impl AppState {
    pub fn new(
        store: Arc<ConversationStore>,
        sessions: SessionManager,
        registry: BackendRegistry,
        study: StudyConfig,
        options: GatewayOptions,
    ) -> Result<Self, GatewayError> {
        let questionnaires = QuestionnaireBook::open(&store)?;
        Ok(AppState {
            store,
            sessions,
            registry,
            ui: UiContent::default(),
            study,
            lexicon: FoodLexicon::shipped(),
            questionnaires,
            options,
            turns: chat::TurnLocks::default(),
        })
    }

    /// Opens the store and every collaborator named by `config`.
    pub fn from_config(
        config: &AppConfig,
        admin_token: Option<String>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let store = Arc::new(ConversationStore::open(config.store_config())?);
        let sessions = SessionManager::open(store.clone(), config.seed, config.session_idle(), clock)?;
        let study = match &config.study {
            Some(p) => StudyConfig::load(p)?,
            None => StudyConfig::shipped(),
        };
        let options = GatewayOptions {
            history_window: config.gateway.history_window,
            backend_timeout_ms: config.gateway.backend_timeout_ms,
            admin_token: admin_token.filter(|t| !t.is_empty()),
            dataset_examples: config.gateway.dataset_examples.clone(),
            static_dir: config.gateway.static_dir.clone(),
        };
        let mut state = AppState::new(store, sessions, config.registry()?, study, options)?;
        if let Some(p) = &config.gateway.ui {
            state.ui = UiContent::load(p)?;
        }
        if let Some(p) = &config.lexicon {
            state.lexicon = FoodLexicon::load(p)?;
        }
        Ok(state)
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    use axum::serve::ListenerExt;
    // Streamed chunks are small; without this each one can sit behind a
    // delayed ACK for ~40 ms.
    let listener = listener.tap_io(|tcp| {
        if let Err(e) = tcp.set_nodelay(true) {
            tracing::warn!("failed to set TCP_NODELAY: {e}");
        }
    });
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Runs a blocking store operation off the async workers.
pub(crate) async fn blocking<T, F>(f: F) -> Result<T, GatewayError>
where
    F: FnOnce() -> Result<T, GatewayError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| GatewayError::Internal(format!("worker failed: {e}")))?
}
