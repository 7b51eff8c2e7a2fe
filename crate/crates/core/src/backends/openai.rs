//! Client for OpenAI-compatible chat-completions servers (GPT-4 style APIs
//! and LLaVA servers exposing the same wire shape). Images travel as base64
//! data URLs inside `image_url` content parts.

use std::collections::VecDeque;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatChunk, ChatRequest, ChunkStream};
use crate::domain::{BackendId, FinishReason, MessageRole};

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub model: String,
    #[serde(default)]
    pub vision: bool,
    /// Base delay before the single retry on a 5xx response.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_backoff_ms() -> u64 {
    250
}

pub struct OpenAiCompatBackend {
    id: BackendId,
    config: RemoteBackendConfig,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl OpenAiCompatBackend {
    pub fn new(id: BackendId, config: RemoteBackendConfig) -> Self {
        let api_key = config.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        OpenAiCompatBackend { id, config, api_key, client: reqwest::Client::new() }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Request body in the chat-completions wire shape.
    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.persona.system_prompt})];
        for turn in &request.history {
            let role = match turn.role {
                MessageRole::User => "user",
                MessageRole::Assistant => "assistant",
                MessageRole::System => "system",
            };
            let content = match &turn.image {
                None => json!(turn.text),
                Some(img) => {
                    let data = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
                    json!([
                        {"type": "text", "text": turn.text},
                        {"type": "image_url", "image_url": {"url": format!("data:{};base64,{}", img.media_type, data)}}
                    ])
                }
            };
            messages.push(json!({"role": role, "content": content}));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stream": true,
        })
    }

    async fn send(&self, body: &Value) -> Result<reqwest::Response, BackendError> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        req.send().await.map_err(|e| BackendError::Transport(e.to_string()))
    }

    /// Jitter in `[0, base)`, derived from the request body so that retries
    /// stay reproducible.
    fn backoff(&self, body: &Value) -> Duration {
        let base = self.config.retry_backoff_ms;
        if base == 0 {
            return Duration::ZERO;
        }
        let digest = Sha256::digest(body.to_string().as_bytes());
        let jitter = u64::from(u16::from_le_bytes([digest[0], digest[1]])) % base;
        Duration::from_millis(base + jitter)
    }
}

async fn upstream_error(resp: reqwest::Response) -> BackendError {
    let status = resp.status().as_u16();
    let body = resp.text().await.unwrap_or_default();
    let body: String = body.chars().take(BODY_EXCERPT).collect();
    BackendError::Upstream { status, body }
}

#[async_trait]
impl ChatBackend for OpenAiCompatBackend {
    fn id(&self) -> BackendId {
        self.id
    }

    fn supports_vision(&self) -> bool {
        self.config.vision
    }

    async fn open_stream(&self, request: &ChatRequest) -> Result<ChunkStream, BackendError> {
        let body = self.request_body(request);
        tracing::debug!(backend = %self.id, max_tokens = request.max_tokens, "dispatching chat completion");
        let mut resp = self.send(&body).await?;
        if resp.status().is_server_error() {
            tracing::warn!(backend = %self.id, status = resp.status().as_u16(), "retrying after server error");
            tokio::time::sleep(self.backoff(&body)).await;
            resp = self.send(&body).await?;
        }
        if !resp.status().is_success() {
            return Err(upstream_error(resp).await);
        }
        Ok(sse_chunks(resp.bytes_stream()))
    }
}

struct SseState<S> {
    bytes: S,
    buffer: Vec<u8>,
    pending: VecDeque<Result<ChatChunk, BackendError>>,
    finish: Option<FinishReason>,
    done: bool,
}

/// Decodes `data:` lines of an OpenAI streaming response into chunks.
fn sse_chunks<S, B, E>(bytes: S) -> ChunkStream
where
    S: futures::Stream<Item = Result<B, E>> + Send + Unpin + 'static,
    B: AsRef<[u8]> + Send + 'static,
    E: std::fmt::Display + Send + 'static,
{
    let state = SseState { bytes, buffer: Vec::new(), pending: VecDeque::new(), finish: None, done: false };
    stream::unfold(state, |mut st| async move {
        loop {
            if let Some(item) = st.pending.pop_front() {
                return Some((item, st));
            }
            if st.done {
                return None;
            }
            match st.bytes.next().await {
                Some(Ok(bytes)) => {
                    st.buffer.extend_from_slice(bytes.as_ref());
                    while let Some(pos) = st.buffer.iter().position(|b| *b == b'\n') {
                        let line: Vec<u8> = st.buffer.drain(..=pos).collect();
                        let line = String::from_utf8_lossy(&line);
                        decode_line(line.trim(), &mut st.pending, &mut st.finish, &mut st.done);
                        if st.done {
                            break;
                        }
                    }
                }
                Some(Err(e)) => {
                    st.done = true;
                    st.pending.push_back(Err(BackendError::Transport(e.to_string())));
                }
                None => {
                    st.done = true;
                    // Some servers close without [DONE] after sending finish_reason.
                    if let Some(reason) = st.finish {
                        st.pending.push_back(Ok(ChatChunk::finish(reason)));
                    }
                }
            }
        }
    })
    .boxed()
}

fn decode_line(
    line: &str,
    pending: &mut VecDeque<Result<ChatChunk, BackendError>>,
    finish: &mut Option<FinishReason>,
    done: &mut bool,
) {
    let Some(data) = line.strip_prefix("data:").map(str::trim) else {
        return;
    };
    if data == "[DONE]" {
        pending.push_back(Ok(ChatChunk::finish(finish.unwrap_or(FinishReason::Stop))));
        *done = true;
        return;
    }
    let value: Value = match serde_json::from_str(data) {
        Ok(v) => v,
        Err(e) => {
            pending.push_back(Err(BackendError::Transport(format!("bad stream event: {e}"))));
            *done = true;
            return;
        }
    };
    if let Some(err) = value.get("error") {
        pending.push_back(Err(BackendError::Upstream { status: 200, body: err.to_string() }));
        *done = true;
        return;
    }
    let choice = &value["choices"][0];
    if let Some(text) = choice["delta"]["content"].as_str() {
        if !text.is_empty() {
            pending.push_back(Ok(ChatChunk::delta(text)));
        }
    }
    if let Some(reason) = choice["finish_reason"].as_str() {
        *finish = Some(match reason {
            "length" => FinishReason::Length,
            _ => FinishReason::Stop,
        });
    }
}
