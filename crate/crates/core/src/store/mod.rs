//! File-backed conversation log.
//!
//! Layout under `data_dir`:
//!
//! ```text
//! conversations.jsonl         one header per conversation, creation order
//! conversations/<id>.jsonl    that conversation's messages, one per line
//! <stream>.jsonl              auxiliary append-only record streams
//! ```
//!
//! Images live in `blob_dir` as `<sha256>.<ext>`. Every file is append-only.
//! A torn final line left by a crash mid-write is dropped on open; it can
//! only belong to an append that was never acknowledged.

mod blob;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    millis_ts, now_millis, Condition, Conversation, ConversationId, DomainError, Message, SessionId, StoredMessage,
};

pub use blob::DEFAULT_MAX_IMAGE_BYTES;

pub const MAX_QUERY_LIMIT: usize = 10_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("conversation {0} not found")]
    NotFound(ConversationId),
    #[error("conversation {0} already exists")]
    AlreadyExists(ConversationId),
    #[error("validation failed: {0}")]
    Validation(#[from] DomainError),
    #[error("image is {size} bytes, limit is {limit}")]
    TooLarge { size: u64, limit: u64 },
    #[error("unsupported media type {0:?}")]
    UnsupportedMediaType(String),
    #[error("storage is full")]
    StorageFull,
    #[error("corrupt record in {path}:{line}: {detail}")]
    Corrupt { path: PathBuf, line: usize, detail: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("i/o error: {0}")]
    Io(std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            StoreError::StorageFull
        } else {
            StoreError::Io(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub data_dir: PathBuf,
    pub blob_dir: PathBuf,
    #[serde(default = "default_true")]
    pub fsync_on_append: bool,
    #[serde(default = "default_max_image")]
    pub max_image_bytes: u64,
}

fn default_true() -> bool {
    true
}

fn default_max_image() -> u64 {
    DEFAULT_MAX_IMAGE_BYTES
}

impl StoreConfig {
    /// `data/` and `blobs/` under one root, fsync on.
    pub fn under(root: impl AsRef<Path>) -> Self {
        let root = root.as_ref();
        StoreConfig {
            data_dir: root.join("data"),
            blob_dir: root.join("blobs"),
            fsync_on_append: true,
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
        }
    }
}

/// Conversation metadata without its messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationHeader {
    pub id: ConversationId,
    pub session_id: SessionId,
    pub condition: Condition,
    #[serde(with = "millis_ts")]
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationSummary {
    #[serde(flatten)]
    pub header: ConversationHeader,
    pub message_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConversationQuery {
    #[serde(default)]
    pub session_id: Option<SessionId>,
    #[serde(default)]
    pub condition: Option<Condition>,
    /// Inclusive lower bound on `created_at`.
    #[serde(default)]
    pub created_from: Option<DateTime<Utc>>,
    /// Exclusive upper bound on `created_at`.
    #[serde(default)]
    pub created_to: Option<DateTime<Utc>>,
    pub limit: usize,
}

impl ConversationQuery {
    pub fn all() -> Self {
        ConversationQuery { limit: MAX_QUERY_LIMIT, ..Default::default() }
    }

    pub fn matches(&self, h: &ConversationHeader) -> bool {
        self.session_id.as_ref().is_none_or(|s| *s == h.session_id)
            && self.condition.is_none_or(|c| c == h.condition)
            && self.created_from.is_none_or(|t| h.created_at >= t)
            && self.created_to.is_none_or(|t| h.created_at < t)
    }

    fn validate(&self) -> Result<(), StoreError> {
        if self.limit == 0 || self.limit > MAX_QUERY_LIMIT {
            return Err(StoreError::InvalidQuery(format!("limit must be in 1..={MAX_QUERY_LIMIT}")));
        }
        Ok(())
    }
}

struct Entry {
    header: ConversationHeader,
    ordinal: usize,
    writer: Mutex<File>,
    log: RwLock<Vec<StoredMessage>>,
}

/// Append-only conversation store. Appends to one conversation serialize
/// on that conversation's writer lock; readers only take short read locks
/// on the in-memory copy.
pub struct ConversationStore {
    config: StoreConfig,
    index: RwLock<HashMap<ConversationId, Arc<Entry>>>,
    headers: Mutex<File>,
    streams: Mutex<HashMap<String, Arc<Mutex<File>>>>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

fn sync_dir(dir: &Path) -> Result<(), StoreError> {
    File::open(dir)?.sync_all()?;
    Ok(())
}

/// Reads a JSON-lines file. A malformed final line (torn write) is cut off
/// the file; a malformed line anywhere else is corruption.
fn load_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut good_len = 0u64;
    let mut line_no = 0;
    let mut buf = Vec::new();
    let mut torn: Option<(usize, String)> = None;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if let Some((line, detail)) = torn.take() {
            return Err(StoreError::Corrupt { path: path.to_path_buf(), line, detail });
        }
        let complete = buf.ends_with(b"\n");
        let text = String::from_utf8_lossy(&buf);
        if text.trim().is_empty() {
            good_len += n as u64;
            continue;
        }
        match serde_json::from_str::<T>(text.trim_end()) {
            Ok(v) if complete => {
                out.push(v);
                good_len += n as u64;
            }
            Ok(_) => torn = Some((line_no, "missing line terminator".into())),
            Err(e) => torn = Some((line_no, e.to_string())),
        }
    }
    if let Some((line, detail)) = torn {
        tracing::warn!(path = %path.display(), line, %detail, "dropping torn final record");
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(good_len)?;
        file.sync_all()?;
    }
    Ok(out)
}

impl ConversationStore {
    /// Opens (or creates) a store, replaying existing logs into memory.
    pub fn open(config: StoreConfig) -> Result<Self, StoreError> {
        std::fs::create_dir_all(config.data_dir.join("conversations"))?;
        std::fs::create_dir_all(&config.blob_dir)?;
        for dir in [&config.data_dir, &config.blob_dir] {
            let probe = dir.join(".write-probe");
            std::fs::write(&probe, b"")?;
            std::fs::remove_file(&probe)?;
        }

        let headers_path = config.data_dir.join("conversations.jsonl");
        let headers: Vec<ConversationHeader> = load_lines(&headers_path)?;
        let mut index = HashMap::with_capacity(headers.len());
        for (ordinal, header) in headers.into_iter().enumerate() {
            let path = Self::log_path(&config, &header.id);
            let messages: Vec<StoredMessage> = load_lines(&path)?;
            for (i, m) in messages.iter().enumerate() {
                if m.seq != i as u64 + 1 || m.message.conversation_id != header.id {
                    return Err(StoreError::Corrupt {
                        path,
                        line: i + 1,
                        detail: format!("unexpected seq {} or conversation id", m.seq),
                    });
                }
            }
            let entry = Entry {
                writer: Mutex::new(open_append(&path)?),
                log: RwLock::new(messages),
                ordinal,
                header,
            };
            index.insert(entry.header.id.clone(), Arc::new(entry));
        }
        Ok(ConversationStore {
            headers: Mutex::new(open_append(&headers_path)?),
            config,
            index: RwLock::new(index),
            streams: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    fn log_path(config: &StoreConfig, id: &ConversationId) -> PathBuf {
        config.data_dir.join("conversations").join(format!("{id}.jsonl"))
    }

    fn write_line(&self, file: &mut File, value: &impl Serialize) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(value)?;
        line.push(b'\n');
        // Restore a clean end of file if a previous write failed midway.
        let before = file.seek(std::io::SeekFrom::End(0))?;
        if let Err(e) = file.write_all(&line) {
            let _ = file.set_len(before);
            return Err(e.into());
        }
        if self.config.fsync_on_append {
            file.sync_data()?;
        }
        Ok(())
    }

    pub fn create_conversation(&self, session_id: SessionId, condition: Condition) -> Result<ConversationHeader, StoreError> {
        self.create_conversation_with_id(ConversationId::random(), session_id, condition)
    }

    pub fn create_conversation_with_id(
        &self,
        id: ConversationId,
        session_id: SessionId,
        condition: Condition,
    ) -> Result<ConversationHeader, StoreError> {
        if !valid_name(id.as_str()) {
            return Err(StoreError::InvalidName(id.to_string()));
        }
        let header = ConversationHeader { id: id.clone(), session_id, condition, created_at: now_millis() };
        let mut headers = self.headers.lock().expect("headers lock");
        if self.index.read().expect("index lock").contains_key(&id) {
            return Err(StoreError::AlreadyExists(id));
        }
        let path = Self::log_path(&self.config, &id);
        let writer = open_append(&path)?;
        if self.config.fsync_on_append {
            sync_dir(path.parent().expect("log files live in a directory"))?;
        }
        self.write_line(&mut headers, &header)?;
        let mut index = self.index.write().expect("index lock");
        let entry = Entry { header: header.clone(), ordinal: index.len(), writer: Mutex::new(writer), log: RwLock::new(Vec::new()) };
        index.insert(id, Arc::new(entry));
        Ok(header)
    }

    fn entry(&self, id: &ConversationId) -> Result<Arc<Entry>, StoreError> {
        self.index.read().expect("index lock").get(id).cloned().ok_or_else(|| StoreError::NotFound(id.clone()))
    }

    pub fn header(&self, id: &ConversationId) -> Result<ConversationHeader, StoreError> {
        Ok(self.entry(id)?.header.clone())
    }

    /// Appends a message, assigning the next sequence number. Returns once
    /// the record is on disk (and synced, when configured).
    pub fn append_message(&self, message: Message) -> Result<StoredMessage, StoreError> {
        message.validate()?;
        let entry = self.entry(&message.conversation_id)?;
        let mut writer = entry.writer.lock().expect("writer lock");
        let seq = entry.log.read().expect("log lock").len() as u64 + 1;
        let stored = StoredMessage { seq, message };
        self.write_line(&mut writer, &stored)?;
        entry.log.write().expect("log lock").push(stored.clone());
        Ok(stored)
    }

    pub fn conversation(&self, id: &ConversationId) -> Result<Conversation, StoreError> {
        let entry = self.entry(id)?;
        let messages = entry.log.read().expect("log lock").clone();
        let h = &entry.header;
        Ok(Conversation {
            id: h.id.clone(),
            session_id: h.session_id.clone(),
            condition: h.condition,
            created_at: h.created_at,
            messages,
        })
    }

    /// The last `window` messages, oldest first.
    pub fn load_history(&self, id: &ConversationId, window: usize) -> Result<Vec<StoredMessage>, StoreError> {
        let entry = self.entry(id)?;
        let log = entry.log.read().expect("log lock");
        Ok(log[log.len().saturating_sub(window)..].to_vec())
    }

    /// Matching conversations ordered by creation time (creation order
    /// breaks ties), truncated to `limit`.
    pub fn query(&self, q: &ConversationQuery) -> Result<Vec<ConversationSummary>, StoreError> {
        q.validate()?;
        let mut hits: Vec<Arc<Entry>> =
            self.index.read().expect("index lock").values().filter(|e| q.matches(&e.header)).cloned().collect();
        hits.sort_by_key(|e| (e.header.created_at, e.ordinal));
        Ok(hits
            .into_iter()
            .take(q.limit)
            .map(|e| ConversationSummary {
                header: e.header.clone(),
                message_count: e.log.read().expect("log lock").len(),
            })
            .collect())
    }

    /// Writes every message of every matching conversation as JSON lines,
    /// conversations in query order and messages in sequence order.
    pub fn export_messages(&self, q: &ConversationQuery, out: &mut impl Write) -> Result<usize, StoreError> {
        let mut n = 0;
        for summary in self.query(q)? {
            for m in self.conversation(&summary.header.id)?.messages {
                serde_json::to_writer(&mut *out, &m)?;
                out.write_all(b"\n")?;
                n += 1;
            }
        }
        Ok(n)
    }

    fn stream(&self, name: &str) -> Result<Arc<Mutex<File>>, StoreError> {
        if !valid_name(name) || name == "conversations" {
            return Err(StoreError::InvalidName(name.to_owned()));
        }
        let mut streams = self.streams.lock().expect("streams lock");
        if let Some(s) = streams.get(name) {
            return Ok(s.clone());
        }
        let file = Arc::new(Mutex::new(open_append(&self.config.data_dir.join(format!("{name}.jsonl")))?));
        streams.insert(name.to_owned(), file.clone());
        Ok(file)
    }

    /// Appends one record to a named auxiliary stream.
    pub fn append_record(&self, stream: &str, value: &impl Serialize) -> Result<(), StoreError> {
        let file = self.stream(stream)?;
        let mut file = file.lock().expect("stream lock");
        self.write_line(&mut file, value)
    }

    pub fn read_records<T: DeserializeOwned>(&self, stream: &str) -> Result<Vec<T>, StoreError> {
        let file = self.stream(stream)?;
        let _guard = file.lock().expect("stream lock");
        load_lines(&self.config.data_dir.join(format!("{stream}.jsonl")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BackendId, FinishReason};

    fn store(dir: &Path) -> ConversationStore {
        ConversationStore::open(StoreConfig::under(dir)).unwrap()
    }

    fn bot_gpt4() -> Condition {
        Condition::ALL[0]
    }

    #[test]
    fn append_order_and_seq() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let h = s.create_conversation(SessionId::random(), bot_gpt4()).unwrap();
        let a = s.append_message(Message::user(h.id.clone(), "hi", None)).unwrap();
        let b = s
            .append_message(Message::assistant(h.id.clone(), "hello", BackendId::Mock, 3, FinishReason::Stop))
            .unwrap();
        assert_eq!((a.seq, b.seq), (1, 2));
        let conv = s.conversation(&h.id).unwrap();
        assert_eq!(conv.messages, vec![a, b]);
    }

    #[test]
    fn empty_message_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let h = s.create_conversation(SessionId::random(), bot_gpt4()).unwrap();
        assert!(matches!(s.append_message(Message::user(h.id, "  ", None)), Err(StoreError::Validation(_))));
    }

    #[test]
    fn history_window() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let h = s.create_conversation(SessionId::random(), bot_gpt4()).unwrap();
        for i in 1..=5 {
            s.append_message(Message::user(h.id.clone(), format!("m{i}"), None)).unwrap();
        }
        let texts = |w| s.load_history(&h.id, w).unwrap().into_iter().map(|m| m.message.text).collect::<Vec<_>>();
        assert_eq!(texts(3), ["m3", "m4", "m5"]);
        assert_eq!(texts(50).len(), 5);
        assert!(matches!(s.load_history(&ConversationId::from("nope"), 3), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn reopen_replays_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let s = store(dir.path());
            let h = s.create_conversation(SessionId::random(), bot_gpt4()).unwrap();
            s.append_message(Message::user(h.id.clone(), "kept", None)).unwrap();
            h.id
        };
        let path = dir.path().join("data/conversations").join(format!("{id}.jsonl"));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":2,\"id\":\"x").unwrap();
        drop(f);
        let s = store(dir.path());
        assert_eq!(s.conversation(&id).unwrap().messages.len(), 1);
        let next = s.append_message(Message::user(id.clone(), "after", None)).unwrap();
        assert_eq!(next.seq, 2);
        drop(s);
        assert_eq!(store(dir.path()).conversation(&id).unwrap().messages.len(), 2);
    }

    #[test]
    fn query_limits() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        assert!(s.query(&ConversationQuery::all()).unwrap().is_empty());
        assert!(s.query(&ConversationQuery { limit: 10_001, ..Default::default() }).is_err());
        assert!(s.query(&ConversationQuery::default()).is_err());
    }

    #[test]
    fn aux_streams() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        s.append_record("sessions", &serde_json::json!({"a": 1})).unwrap();
        s.append_record("sessions", &serde_json::json!({"a": 2})).unwrap();
        let v: Vec<serde_json::Value> = s.read_records("sessions").unwrap();
        assert_eq!(v.len(), 2);
        assert!(s.append_record("../x", &1).is_err());
    }
}
