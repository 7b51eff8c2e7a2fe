use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Deserialize;

use super::{blocking, participant_records, AppState, GatewayError};
use crate::dataset::{export_json, read_examples};
use crate::domain::{BackendId, Condition, SessionId};
use crate::eval::{EvalJob, JobOutput};
use crate::experiment::{OutcomeFit, ScalesReport};
use crate::store::ConversationQuery;

pub const ADMIN_HEADER: &str = "x-admin-token";

/// Constant-time comparison so the token cannot be probed byte by byte.
fn token_matches(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

impl AppState {
    /// Passes when the request carries the configured admin token. With no
    /// token configured, admin access is off.
    pub fn require_admin(&self, headers: &HeaderMap) -> Result<(), GatewayError> {
        let Some(expected) = &self.options.admin_token else {
            return Err(GatewayError::Forbidden("admin access is disabled".into()));
        };
        let given = headers.get(ADMIN_HEADER).map(|v| v.as_bytes()).unwrap_or_default();
        if token_matches(given, expected.as_bytes()) {
            Ok(())
        } else {
            Err(GatewayError::Forbidden("admin token required".into()))
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct EvalRunRequest {
    #[serde(flatten)]
    pub job: EvalJob,
    #[serde(default = "default_candidate")]
    pub candidate: BackendId,
    #[serde(default = "default_reference")]
    pub reference_backend: BackendId,
}

fn default_candidate() -> BackendId {
    BackendId::LlavaFinetuned
}

fn default_reference() -> BackendId {
    BackendId::Gpt4Api
}

pub async fn eval_run(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<EvalRunRequest>,
) -> Result<Json<JobOutput>, GatewayError> {
    state.require_admin(&headers)?;
    let candidate = state.registry.get(req.candidate)?;
    let reference = state.registry.get(req.reference_backend)?;
    let out = req.job.run(candidate.as_ref(), reference.as_ref(), &state.lexicon).await?;
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
pub struct StatsQuery {
    pub outcome: Option<String>,
    /// Drop participants who failed the manipulation check.
    #[serde(default)]
    pub passed_only: bool,
}

pub async fn stats_scales(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
) -> Result<Json<ScalesReport>, GatewayError> {
    state.require_admin(&headers)?;
    let s = state.clone();
    let records = blocking(move || participant_records(&s.store)).await?;
    Ok(Json(state.study.scales_report(&records)?))
}

pub async fn stats_regression(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<StatsQuery>,
) -> Result<Json<BTreeMap<String, OutcomeFit>>, GatewayError> {
    state.require_admin(&headers)?;
    let s = state.clone();
    let records = blocking(move || participant_records(&s.store)).await?;
    Ok(Json(state.study.regression_report(&records, q.outcome.as_deref(), q.passed_only)?))
}

pub async fn stats(
    state: State<Arc<AppState>>,
    headers: HeaderMap,
    Path(kind): Path<String>,
    query: Query<StatsQuery>,
) -> Result<Response, GatewayError> {
    match kind.as_str() {
        "scales" => Ok(stats_scales(state, headers).await?.into_response()),
        "regression" => Ok(stats_regression(state, headers, query).await?.into_response()),
        other => Err(GatewayError::NotFound(format!("stats kind {other}"))),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportQuery {
    pub session_id: Option<String>,
    /// `profile:model`.
    pub condition: Option<String>,
    pub limit: Option<usize>,
}

pub async fn export(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(kind): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, GatewayError> {
    state.require_admin(&headers)?;
    match kind.as_str() {
        "conversations" => {
            let condition = match q.condition {
                Some(c) => Some(c.parse::<Condition>().map_err(GatewayError::InvalidCondition)?),
                None => None,
            };
            let query = ConversationQuery {
                session_id: q.session_id.map(SessionId::from),
                condition,
                created_from: None,
                created_to: None,
                limit: q.limit.unwrap_or(ConversationQuery::all().limit),
            };
            let store = state.store.clone();
            let body = blocking(move || {
                let mut buf = Vec::new();
                store.export_messages(&query, &mut buf).map_err(|e| match e {
                    crate::store::StoreError::InvalidQuery(m) => GatewayError::BadRequest(m),
                    other => other.into(),
                })?;
                Ok(buf)
            })
            .await?;
            Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
        }
        "dataset" => {
            let Some(path) = state.options.dataset_examples.clone() else {
                return Err(GatewayError::NotFound("no dataset is configured".into()));
            };
            let json = blocking(move || Ok(export_json(&read_examples(&path)?)?)).await?;
            Ok(([(header::CONTENT_TYPE, "application/json")], json).into_response())
        }
        other => Err(GatewayError::NotFound(format!("export kind {other}"))),
    }
}
