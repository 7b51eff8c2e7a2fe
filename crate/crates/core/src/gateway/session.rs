use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;
use crate::domain::{millis_ts, now_millis, Condition, ParticipantId, SessionId};
use crate::experiment::BlockAssigner;
use crate::store::ConversationStore;

pub const SESSION_STREAM: &str = "sessions";

/// Activity is written back at most this often, so idle expiry survives a
/// restart without logging every request.
const ACTIVITY_PERSIST_EVERY: Duration = Duration::minutes(15);

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        now_millis()
    }
}

/// Settable clock for tests.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().expect("clock lock") += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock lock")
    }
}

/// Bearer credential for a session: 256 bits from the OS-seeded CSPRNG.
/// Only its digest is ever written to disk.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionToken(String);

impl SessionToken {
    pub fn generate() -> Self {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        SessionToken(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn digest(&self) -> String {
        token_digest(&self.0)
    }
}

impl From<String> for SessionToken {
    fn from(s: String) -> Self {
        SessionToken(s)
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionToken(..)")
    }
}

fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

/// A participant's session as seen by handlers (no credential).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub participant_id: ParticipantId,
    pub condition: Condition,
    #[serde(with = "millis_ts")]
    pub created_at: DateTime<Utc>,
    pub walkthrough_done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Assigner,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum SessionEvent {
    Created {
        token_sha256: String,
        #[serde(flatten)]
        session: Session,
        assignment: Assignment,
    },
    WalkthroughDone {
        session_id: SessionId,
        #[serde(with = "millis_ts")]
        at: DateTime<Utc>,
    },
    Active {
        session_id: SessionId,
        #[serde(with = "millis_ts")]
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone)]
struct Slot {
    session: Session,
    last_active: DateTime<Utc>,
    last_persisted: DateTime<Utc>,
}

/// Session registry backed by an append-only event stream in the store.
pub struct SessionManager {
    store: Arc<ConversationStore>,
    assigner: Mutex<BlockAssigner>,
    slots: RwLock<HashMap<String, Slot>>,
    by_id: RwLock<HashMap<SessionId, String>>,
    idle: Duration,
    clock: Arc<dyn Clock>,
}

impl SessionManager {
    /// Replays the session stream. The assigner resumes after the number of
    /// assigner-drawn sessions already on record, so a restart continues
    /// the same block sequence.
    pub fn open(
        store: Arc<ConversationStore>,
        seed: u64,
        idle: std::time::Duration,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let events: Vec<SessionEvent> = store.read_records(SESSION_STREAM)?;
        let mut slots = HashMap::new();
        let mut by_id = HashMap::new();
        let mut draws = 0u64;
        for event in events {
            match event {
                SessionEvent::Created { token_sha256, session, assignment } => {
                    if assignment == Assignment::Assigner {
                        draws += 1;
                    }
                    by_id.insert(session.session_id.clone(), token_sha256.clone());
                    let t = session.created_at;
                    slots.insert(token_sha256, Slot { session, last_active: t, last_persisted: t });
                }
                SessionEvent::WalkthroughDone { session_id, at } => {
                    if let Some(slot) = by_id.get(&session_id).and_then(|k| slots.get_mut(k)) {
                        slot.session.walkthrough_done = true;
                        slot.last_active = slot.last_active.max(at);
                        slot.last_persisted = slot.last_active;
                    }
                }
                SessionEvent::Active { session_id, at } => {
                    if let Some(slot) = by_id.get(&session_id).and_then(|k| slots.get_mut(k)) {
                        slot.last_active = slot.last_active.max(at);
                        slot.last_persisted = slot.last_active;
                    }
                }
            }
        }
        Ok(SessionManager {
            store,
            assigner: Mutex::new(BlockAssigner::resume(seed, draws)),
            slots: RwLock::new(slots),
            by_id: RwLock::new(by_id),
            idle: Duration::from_std(idle).unwrap_or(Duration::MAX),
            clock,
        })
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// New session with either the researcher's override or the next
    /// assigner draw. The draw and its record are made under one lock so
    /// the persisted order matches the draw order.
    pub fn create(&self, requested: Option<Condition>) -> Result<(SessionToken, Session), GatewayError> {
        let token = SessionToken::generate();
        let now = self.clock.now();
        let mut assigner = self.assigner.lock().expect("assigner lock");
        let (condition, assignment) = match requested {
            Some(c) => (c, Assignment::Override),
            // Peek on a copy; the real draw happens only once the record is on disk.
            None => (assigner.clone().next_condition(), Assignment::Assigner),
        };
        let session = Session {
            session_id: SessionId::random(),
            participant_id: ParticipantId::random(),
            condition,
            created_at: now,
            walkthrough_done: false,
        };
        let digest = token.digest();
        self.store.append_record(
            SESSION_STREAM,
            &SessionEvent::Created { token_sha256: digest.clone(), session: session.clone(), assignment },
        )?;
        if assignment == Assignment::Assigner {
            assigner.next_condition();
        }
        drop(assigner);
        self.by_id.write().expect("sessions lock").insert(session.session_id.clone(), digest.clone());
        self.slots
            .write()
            .expect("sessions lock")
            .insert(digest, Slot { session: session.clone(), last_active: now, last_persisted: now });
        Ok((token, session))
    }

    /// Resolves a bearer token, refreshing its idle timer.
    pub fn authenticate(&self, token: &str) -> Result<Session, GatewayError> {
        let digest = token_digest(token);
        let now = self.clock.now();
        let mut slots = self.slots.write().expect("sessions lock");
        let slot = slots.get_mut(&digest).ok_or(GatewayError::Unauthorized)?;
        if now - slot.last_active > self.idle {
            return Err(GatewayError::SessionExpired);
        }
        slot.last_active = now;
        if now - slot.last_persisted >= ACTIVITY_PERSIST_EVERY {
            slot.last_persisted = now;
            let event = SessionEvent::Active { session_id: slot.session.session_id.clone(), at: now };
            if let Err(e) = self.store.append_record(SESSION_STREAM, &event) {
                tracing::warn!(error = %e, "could not persist session activity");
            }
        }
        Ok(slot.session.clone())
    }

    pub fn complete_walkthrough(&self, session_id: &SessionId) -> Result<Session, GatewayError> {
        let digest =
            self.by_id.read().expect("sessions lock").get(session_id).cloned().ok_or(GatewayError::Unauthorized)?;
        let mut slots = self.slots.write().expect("sessions lock");
        let slot = slots.get_mut(&digest).ok_or(GatewayError::Unauthorized)?;
        if !slot.session.walkthrough_done {
            let event = SessionEvent::WalkthroughDone { session_id: session_id.clone(), at: self.clock.now() };
            self.store.append_record(SESSION_STREAM, &event)?;
            slot.session.walkthrough_done = true;
        }
        Ok(slot.session.clone())
    }

    /// Every known session, oldest first.
    pub fn all(&self) -> Vec<Session> {
        let mut out: Vec<Session> = self.slots.read().expect("sessions lock").values().map(|s| s.session.clone()).collect();
        out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        out
    }

    pub fn draws(&self) -> u64 {
        self.assigner.lock().expect("assigner lock").draws()
    }
}

/// Sessions on record in `store`, oldest first, without starting a manager.
pub fn read_sessions(store: &ConversationStore) -> Result<Vec<Session>, GatewayError> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut index = HashMap::new();
    for event in store.read_records::<SessionEvent>(SESSION_STREAM)? {
        match event {
            SessionEvent::Created { session, .. } => {
                index.insert(session.session_id.clone(), sessions.len());
                sessions.push(session);
            }
            SessionEvent::WalkthroughDone { session_id, .. } => {
                if let Some(&i) = index.get(&session_id) {
                    sessions[i].walkthrough_done = true;
                }
            }
            SessionEvent::Active { .. } => {}
        }
    }
    Ok(sessions)
}
