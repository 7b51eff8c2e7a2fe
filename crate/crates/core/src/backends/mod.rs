//! Uniform adapter over chat-completion services.
//!
//! Every backend turns a [`ChatRequest`] into a stream of [`ChatChunk`]s.
//! [`complete`] adds the shared contract on top: request validation, the
//! vision capability check, the wall-clock deadline, and the single-final
//! chunk rule.

mod mock;
mod openai;
mod persona;
mod prompt;

pub use mock::{MockBackend, MockScript, ScriptEntry, NON_FOOD_DISCLAIMER};
pub use openai::{OpenAiCompatBackend, RemoteBackendConfig};
pub use persona::{
    route, PersonaTemplate, Route, BOT_AVATAR, BOT_DISPLAY_NAME, PET_AVATAR, PET_DISPLAY_NAME,
};
pub use prompt::{render_prompt, ChatTurn, ImagePlaceholder, PromptBlock, PromptDocument, TurnImage};

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, BoxStream, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::time::Instant;

use crate::domain::{BackendId, FinishReason, MessageRole};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_TEMPERATURE: f32 = 0.7;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend did not finish within {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("upstream returned status {status}: {body}")]
    Upstream { status: u16, body: String },
    #[error("backend {0} does not accept images")]
    ImageUnsupported(BackendId),
    #[error("chat history is empty")]
    EmptyHistory,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend {0} is not configured")]
    NotConfigured(BackendId),
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub history: Vec<ChatTurn>,
    pub persona: PersonaTemplate,
    pub max_tokens: u32,
    pub temperature: f32,
    pub timeout_ms: u64,
}

impl ChatRequest {
    pub fn new(history: Vec<ChatTurn>, persona: PersonaTemplate) -> Self {
        ChatRequest {
            history,
            persona,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.history.is_empty() {
            return Err(BackendError::EmptyHistory);
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidRequest("timeout_ms must be positive".into()));
        }
        if self.history.iter().any(|t| t.image.is_some() && t.role != MessageRole::User) {
            return Err(BackendError::InvalidRequest("images are only allowed on user turns".into()));
        }
        Ok(())
    }

    pub fn has_images(&self) -> bool {
        self.history.iter().any(|t| t.image.is_some())
    }

    pub fn prompt(&self) -> Result<PromptDocument, BackendError> {
        render_prompt(&self.persona, &self.history)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatChunk {
    pub delta_text: String,
    pub is_final: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

impl ChatChunk {
    pub fn delta(text: impl Into<String>) -> Self {
        ChatChunk { delta_text: text.into(), is_final: false, finish_reason: None }
    }

    pub fn finish(reason: FinishReason) -> Self {
        ChatChunk { delta_text: String::new(), is_final: true, finish_reason: Some(reason) }
    }
}

pub type ChunkStream = BoxStream<'static, Result<ChatChunk, BackendError>>;

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> BackendId;

    fn supports_vision(&self) -> bool;

    /// Raw provider stream. Callers should go through [`complete`].
    async fn open_stream(&self, request: &ChatRequest) -> Result<ChunkStream, BackendError>;
}

/// Streams a completion under the shared contract. The returned stream
/// yields at least one chunk, ends right after the single final chunk, and
/// yields `Err(Timeout)` once `timeout_ms` of wall time has elapsed.
pub async fn complete(backend: &dyn ChatBackend, request: &ChatRequest) -> Result<ChunkStream, BackendError> {
    request.validate()?;
    if request.has_images() && !backend.supports_vision() {
        return Err(BackendError::ImageUnsupported(backend.id()));
    }
    let timeout_ms = request.timeout_ms;
    let deadline = Instant::now() + Duration::from_millis(timeout_ms);
    let inner = match tokio::time::timeout_at(deadline, backend.open_stream(request)).await {
        Ok(result) => result?,
        Err(_) => return Err(BackendError::Timeout { timeout_ms }),
    };

    struct State {
        inner: ChunkStream,
        done: bool,
    }
    let guarded = stream::unfold(State { inner, done: false }, move |mut st| async move {
        if st.done {
            return None;
        }
        match tokio::time::timeout_at(deadline, st.inner.next()).await {
            Err(_) => {
                st.done = true;
                Some((Err(BackendError::Timeout { timeout_ms }), st))
            }
            Ok(None) => {
                st.done = true;
                Some((Err(BackendError::Transport("stream ended without a final chunk".into())), st))
            }
            Ok(Some(Err(e))) => {
                st.done = true;
                Some((Err(e), st))
            }
            Ok(Some(Ok(mut chunk))) => {
                if chunk.is_final {
                    st.done = true;
                    chunk.finish_reason.get_or_insert(FinishReason::Stop);
                }
                Some((Ok(chunk), st))
            }
        }
    });
    Ok(guarded.boxed())
}

/// Result of draining a completion stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub chunks: usize,
}

/// Non-streaming form of [`complete`]: the concatenated deltas.
pub async fn complete_text(backend: &dyn ChatBackend, request: &ChatRequest) -> Result<Completion, BackendError> {
    let mut stream = complete(backend, request).await?;
    let mut text = String::new();
    let mut chunks = 0;
    while let Some(item) = stream.next().await {
        let chunk = item?;
        chunks += 1;
        text.push_str(&chunk.delta_text);
        if chunk.is_final {
            return Ok(Completion {
                text,
                finish_reason: chunk.finish_reason.unwrap_or(FinishReason::Stop),
                chunks,
            });
        }
    }
    Err(BackendError::Transport("stream ended without a final chunk".into()))
}

/// Backends keyed by identity.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: HashMap<BackendId, Arc<dyn ChatBackend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every identity served by the same mock.
    pub fn all_mock(mock: MockBackend) -> Self {
        let mock: Arc<dyn ChatBackend> = Arc::new(mock);
        let mut reg = Self::new();
        for id in BackendId::ALL {
            reg.backends.insert(id, mock.clone());
        }
        reg
    }

    pub fn insert(&mut self, id: BackendId, backend: Arc<dyn ChatBackend>) {
        self.backends.insert(id, backend);
    }

    pub fn get(&self, id: BackendId) -> Result<Arc<dyn ChatBackend>, BackendError> {
        self.backends.get(&id).cloned().ok_or(BackendError::NotConfigured(id))
    }

    pub async fn complete(&self, id: BackendId, request: &ChatRequest) -> Result<ChunkStream, BackendError> {
        let backend = self.get(id)?;
        complete(backend.as_ref(), request).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MediaType;

    struct Scripted(Vec<ChatChunk>);

    #[async_trait]
    impl ChatBackend for Scripted {
        fn id(&self) -> BackendId {
            BackendId::LlavaRaw
        }
        fn supports_vision(&self) -> bool {
            false
        }
        async fn open_stream(&self, _request: &ChatRequest) -> Result<ChunkStream, BackendError> {
            Ok(stream::iter(self.0.clone().into_iter().map(Ok)).boxed())
        }
    }

    fn request() -> ChatRequest {
        ChatRequest::new(vec![ChatTurn::user("hi")], PersonaTemplate::bot())
    }

    #[tokio::test]
    async fn chunks_concatenate() {
        let b = Scripted(vec![
            ChatChunk::delta("Hel"),
            ChatChunk::delta("lo"),
            ChatChunk::finish(FinishReason::Stop),
        ]);
        let done = complete_text(&b, &request()).await.unwrap();
        assert_eq!(done.text, "Hello");
        assert_eq!(done.chunks, 3);
        assert_eq!(done.finish_reason, FinishReason::Stop);
    }

    #[tokio::test]
    async fn stream_stops_after_final_chunk() {
        let b = Scripted(vec![
            ChatChunk::delta("a"),
            ChatChunk::finish(FinishReason::Length),
            ChatChunk::delta("ignored"),
        ]);
        let chunks: Vec<_> = complete(&b, &request()).await.unwrap().collect().await;
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks.iter().filter(|c| c.as_ref().unwrap().is_final).count(), 1);
    }

    #[tokio::test]
    async fn missing_final_chunk_is_an_error() {
        let b = Scripted(vec![ChatChunk::delta("a")]);
        assert!(matches!(complete_text(&b, &request()).await, Err(BackendError::Transport(_))));
    }

    #[tokio::test]
    async fn images_need_vision() {
        let b = Scripted(vec![]);
        let req = ChatRequest::new(
            vec![ChatTurn::user_with_image("look", TurnImage::new(vec![0u8], MediaType::Jpeg))],
            PersonaTemplate::bot(),
        );
        assert!(matches!(complete(&b, &req).await, Err(BackendError::ImageUnsupported(BackendId::LlavaRaw))));
    }

    #[test]
    fn request_validation() {
        let mut r = request();
        r.temperature = 2.5;
        assert!(r.validate().is_err());
        let mut r = request();
        r.history.clear();
        assert_eq!(r.validate(), Err(BackendError::EmptyHistory));
        let mut r = request();
        r.history.push(ChatTurn {
            role: MessageRole::Assistant,
            text: "x".into(),
            image: Some(TurnImage::new(vec![1u8], MediaType::Png)),
        });
        assert!(r.validate().is_err());
    }
}
