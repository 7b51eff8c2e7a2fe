use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, OwnedMutexGuard};

use super::{blocking, AppState, GatewayError, Session};
use crate::backends::{route, ChatRequest, ChatTurn, PersonaTemplate, TurnImage};
use crate::domain::{ConversationId, FinishReason, Message, MessageId, MessageRole, StoredMessage};

/// Shown to the participant when a reply cannot be produced. It is streamed
/// as the final chunk and persisted, so the transcript matches the screen.
pub const APOLOGY: &str = "Sorry, I ran into a problem while answering. Please try sending your message again.";

#[derive(Debug, Clone)]
pub struct ImageUpload {
    pub bytes: Vec<u8>,
    pub media_type: String,
}

#[derive(Debug, Clone, Default)]
pub struct TurnInput {
    pub text: String,
    pub image: Option<ImageUpload>,
}

/// Payload of the final `done` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnDone {
    pub conversation_id: ConversationId,
    pub user_message_id: MessageId,
    pub message_id: MessageId,
    pub seq: u64,
    pub latency_ms: u64,
    pub finish_reason: FinishReason,
    /// The persisted assistant text, equal to the concatenated chunks.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnEvent {
    Chunk(String),
    Error { message: String, detail: String },
    Done(TurnDone),
}

/// One async mutex per conversation so turns on it run one at a time.
#[derive(Default)]
pub(crate) struct TurnLocks(Mutex<HashMap<ConversationId, Arc<tokio::sync::Mutex<()>>>>);

impl TurnLocks {
    async fn acquire(&self, id: &ConversationId) -> OwnedMutexGuard<()> {
        let lock = self.0.lock().expect("turn locks").entry(id.clone()).or_default().clone();
        lock.lock_owned().await
    }
}

impl AppState {
    /// Persists the user turn, then streams the reply from a background task
    /// that persists the assistant turn even if the client goes away.
    ///
    /// Errors before the stream starts (bad input, unknown conversation,
    /// oversized image) are returned directly.
    pub async fn start_turn(
        self: &Arc<Self>,
        session: &Session,
        conversation: Option<ConversationId>,
        input: TurnInput,
    ) -> Result<(ConversationId, mpsc::Receiver<TurnEvent>), GatewayError> {
        if input.text.trim().is_empty() && input.image.is_none() {
            return Err(GatewayError::BadRequest("a message needs text or an image".into()));
        }
        let conversation_id = match conversation {
            Some(id) => {
                self.owned_conversation(session, &id)?;
                id
            }
            None => {
                let (store, sid, cond) = (self.store.clone(), session.session_id.clone(), session.condition);
                blocking(move || Ok(store.create_conversation(sid, cond)?)).await?.id
            }
        };
        let image_ref = match input.image {
            Some(upload) => {
                let store = self.store.clone();
                Some(blocking(move || Ok(store.put_image(&upload.bytes, &upload.media_type)?)).await?)
            }
            None => None,
        };

        let guard = self.turns.acquire(&conversation_id).await;
        let user = Message::user(conversation_id.clone(), input.text, image_ref);
        let store = self.store.clone();
        let user = blocking(move || Ok(store.append_message(user)?)).await?;

        let (tx, rx) = mpsc::channel(64);
        let state = self.clone();
        let condition = session.condition;
        tokio::spawn(async move {
            state.run_reply(condition, user, tx).await;
            drop(guard);
        });
        Ok((conversation_id, rx))
    }

    /// The conversation, if it belongs to `session`. Someone else's
    /// conversation looks the same as a missing one.
    pub fn owned_conversation(
        &self,
        session: &Session,
        id: &ConversationId,
    ) -> Result<crate::store::ConversationHeader, GatewayError> {
        match self.store.header(id) {
            Ok(h) if h.session_id == session.session_id => Ok(h),
            _ => Err(GatewayError::NotFound(format!("conversation {id}"))),
        }
    }

    /// Last K turns as backend history: the new message plus up to K−1
    /// earlier exchanges. Failed replies are left out.
    fn history(&self, user: &StoredMessage) -> Result<Vec<ChatTurn>, GatewayError> {
        let window = 2 * self.options.history_window - 1;
        let log = self.store.load_history(&user.message.conversation_id, window + 1)?;
        let upto = log.iter().position(|m| m.seq == user.seq).map_or(log.len(), |i| i + 1);
        let start = upto.saturating_sub(window);
        let mut turns = Vec::new();
        for m in &log[start..upto] {
            let msg = &m.message;
            match msg.role {
                MessageRole::Assistant if msg.finish_reason == Some(FinishReason::Error) => {}
                MessageRole::Assistant => turns.push(ChatTurn::assistant(msg.text.clone())),
                MessageRole::User => {
                    let image = match &msg.image_ref {
                        Some(r) => Some(TurnImage::new(self.store.get_image(r)?, r.media_type)),
                        None => None,
                    };
                    turns.push(ChatTurn { role: MessageRole::User, text: msg.text.clone(), image });
                }
                MessageRole::System => {}
            }
        }
        Ok(turns)
    }

    async fn run_reply(self: Arc<Self>, condition: crate::domain::Condition, user: StoredMessage, tx: mpsc::Sender<TurnEvent>) {
        let route = route(condition.model());
        let persona = route.persona_override.clone().unwrap_or_else(|| PersonaTemplate::for_profile(condition.profile()));
        let conversation_id = user.message.conversation_id.clone();
        let started = Instant::now();

        let backend = self.registry.get(route.backend);
        let backend_id = backend.as_ref().map(|b| b.id()).unwrap_or(route.backend);
        let mut text = String::new();
        let outcome: Result<FinishReason, String> = async {
            let backend = backend.map_err(|e| e.to_string())?;
            let state = self.clone();
            let u = user.clone();
            let history = blocking(move || state.history(&u)).await.map_err(|e| e.to_string())?;
            let request =
                ChatRequest::new(history, persona).with_timeout_ms(self.options.backend_timeout_ms);
            let mut stream = crate::backends::complete(backend.as_ref(), &request).await.map_err(|e| e.to_string())?;
            while let Some(item) = stream.next().await {
                let chunk = item.map_err(|e| e.to_string())?;
                if !chunk.delta_text.is_empty() {
                    text.push_str(&chunk.delta_text);
                    let _ = tx.send(TurnEvent::Chunk(chunk.delta_text)).await;
                }
                if chunk.is_final {
                    if text.trim().is_empty() {
                        return Err("backend returned an empty reply".to_owned());
                    }
                    return Ok(chunk.finish_reason.unwrap_or(FinishReason::Stop));
                }
            }
            Err("stream ended without a final chunk".to_owned())
        }
        .await;

        let finish = match outcome {
            Ok(reason) => reason,
            Err(detail) => {
                tracing::warn!(conversation = %conversation_id, error = %detail, "reply failed");
                let suffix = if text.is_empty() { APOLOGY.to_owned() } else { format!("\n\n{APOLOGY}") };
                text.push_str(&suffix);
                let _ = tx.send(TurnEvent::Chunk(suffix)).await;
                let _ = tx.send(TurnEvent::Error { message: APOLOGY.to_owned(), detail }).await;
                FinishReason::Error
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        let reply = Message::assistant(conversation_id.clone(), text.clone(), backend_id, latency_ms, finish);
        let store = self.store.clone();
        match blocking(move || Ok(store.append_message(reply)?)).await {
            Ok(stored) => {
                let done = TurnDone {
                    conversation_id,
                    user_message_id: user.message.id,
                    message_id: stored.message.id,
                    seq: stored.seq,
                    latency_ms,
                    finish_reason: finish,
                    text,
                };
                let _ = tx.send(TurnEvent::Done(done)).await;
            }
            Err(e) => {
                tracing::error!(conversation = %conversation_id, error = %e, "could not persist reply");
                let _ = tx
                    .send(TurnEvent::Error { message: APOLOGY.to_owned(), detail: format!("reply not saved: {e}") })
                    .await;
            }
        }
    }
}
