//! Shared helpers: an in-process gateway on a loopback port and a small
//! client that speaks its session and event-stream protocol.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use purrfessor::backends::{BackendRegistry, MockBackend};
use purrfessor::experiment::StudyConfig;
use purrfessor::gateway::{AppState, Clock, GatewayOptions, SessionManager, SystemClock};
use purrfessor::store::{ConversationStore, StoreConfig};
use serde_json::Value;
use tokio::sync::oneshot;

pub const ADMIN_TOKEN: &str = "test-admin-token";
pub const SEED: u64 = 7;

pub fn store_config(dir: &Path) -> StoreConfig {
    StoreConfig {
        data_dir: dir.join("data"),
        blob_dir: dir.join("blobs"),
        fsync_on_append: true,
        max_image_bytes: 64 * 1024,
    }
}

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

pub struct ServerBuilder<'a> {
    dir: &'a Path,
    mock: MockBackend,
    clock: Arc<dyn Clock>,
    idle: Duration,
    history_window: usize,
}

impl<'a> ServerBuilder<'a> {
    pub fn new(dir: &'a Path) -> Self {
        ServerBuilder {
            dir,
            mock: MockBackend::new(SEED),
            clock: Arc::new(SystemClock),
            idle: Duration::from_secs(24 * 3600),
            history_window: 10,
        }
    }

    pub fn mock(mut self, mock: MockBackend) -> Self {
        self.mock = mock;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn idle(mut self, idle: Duration) -> Self {
        self.idle = idle;
        self
    }

    pub fn history_window(mut self, k: usize) -> Self {
        self.history_window = k;
        self
    }

    pub async fn start(self) -> TestServer {
        let store = Arc::new(ConversationStore::open(store_config(self.dir)).unwrap());
        let sessions = SessionManager::open(store.clone(), SEED, self.idle, self.clock).unwrap();
        let options = GatewayOptions {
            history_window: self.history_window,
            backend_timeout_ms: 10_000,
            admin_token: Some(ADMIN_TOKEN.into()),
            dataset_examples: None,
            static_dir: None,
        };
        let state = Arc::new(
            AppState::new(store, sessions, BackendRegistry::all_mock(self.mock), StudyConfig::shipped(), options)
                .unwrap(),
        );
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(purrfessor_serve(state.clone(), listener, rx));
        TestServer { base, state, shutdown: Some(tx), task }
    }
}

async fn purrfessor_serve(state: Arc<AppState>, listener: tokio::net::TcpListener, rx: oneshot::Receiver<()>) {
    purrfessor::gateway::serve(state, listener, async {
        let _ = rx.await;
    })
    .await
    .unwrap();
}

impl TestServer {
    pub async fn start(dir: &Path) -> TestServer {
        ServerBuilder::new(dir).start().await
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    pub fn client(&self) -> Client {
        Client { http: reqwest::Client::new(), base: self.base.clone() }
    }
}

#[derive(Clone)]
pub struct Client {
    pub http: reqwest::Client,
    pub base: String,
}

#[derive(Debug, Clone)]
pub struct SessionInfo {
    pub token: String,
    pub session_id: String,
    pub participant_id: String,
    pub condition: Value,
}

/// One parsed event-stream turn.
#[derive(Debug, Clone, Default)]
pub struct Turn {
    pub conversation_id: String,
    pub chunks: Vec<String>,
    pub error: Option<Value>,
    pub done: Option<Value>,
    pub elapsed: Duration,
}

impl Turn {
    pub fn text(&self) -> String {
        self.chunks.concat()
    }
}

/// Splits an event-stream body into (event, data) pairs.
pub fn parse_sse(body: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for block in body.split("\n\n") {
        let mut event = None;
        let mut data = Vec::new();
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                event = Some(v.trim_start().to_owned());
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push(v.strip_prefix(' ').unwrap_or(v).to_owned());
            }
        }
        if let Some(event) = event {
            out.push((event, data.join("\n")));
        }
    }
    out
}

impl Client {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn create_session(&self) -> SessionInfo {
        let resp = self.http.post(self.url("/api/sessions")).send().await.unwrap();
        assert_eq!(resp.status(), 201);
        Self::session_info(resp.json().await.unwrap())
    }

    pub async fn create_session_with(&self, body: Value, admin: Option<&str>) -> reqwest::Response {
        let mut req = self.http.post(self.url("/api/sessions")).json(&body);
        if let Some(t) = admin {
            req = req.header("x-admin-token", t);
        }
        req.send().await.unwrap()
    }

    pub fn session_info(v: Value) -> SessionInfo {
        SessionInfo {
            token: v["token"].as_str().unwrap().to_owned(),
            session_id: v["session_id"].as_str().unwrap().to_owned(),
            participant_id: v["participant_id"].as_str().unwrap().to_owned(),
            condition: v["condition"].clone(),
        }
    }

    pub async fn get(&self, token: &str, path: &str) -> reqwest::Response {
        self.http.get(self.url(path)).bearer_auth(token).send().await.unwrap()
    }

    pub async fn post_json(&self, token: &str, path: &str, body: Value) -> reqwest::Response {
        self.http.post(self.url(path)).bearer_auth(token).json(&body).send().await.unwrap()
    }

    pub async fn new_conversation(&self, token: &str) -> String {
        let resp = self.http.post(self.url("/api/conversations")).bearer_auth(token).send().await.unwrap();
        assert_eq!(resp.status(), 201);
        let v: Value = resp.json().await.unwrap();
        v["id"].as_str().unwrap().to_owned()
    }

    /// Sends one turn and reads the whole event stream.
    pub async fn send(&self, token: &str, conversation: &str, body: Value) -> Result<Turn, (u16, Value)> {
        let started = Instant::now();
        let resp = self
            .http
            .post(self.url(&format!("/api/conversations/{conversation}/messages")))
            .bearer_auth(token)
            .json(&body)
            .send()
            .await
            .unwrap();
        Self::read_turn(resp, started).await
    }

    pub async fn send_text(&self, token: &str, conversation: &str, text: &str) -> Turn {
        self.send(token, conversation, serde_json::json!({ "text": text })).await.unwrap()
    }

    pub async fn read_turn(resp: reqwest::Response, started: Instant) -> Result<Turn, (u16, Value)> {
        let status = resp.status().as_u16();
        if status != 200 {
            return Err((status, resp.json().await.unwrap_or(Value::Null)));
        }
        let conversation_id =
            resp.headers().get("x-conversation-id").map(|v| v.to_str().unwrap().to_owned()).unwrap_or_default();
        let body = resp.text().await.unwrap();
        let mut turn = Turn { conversation_id, elapsed: started.elapsed(), ..Default::default() };
        for (event, data) in parse_sse(&body) {
            let v: Value = serde_json::from_str(&data).unwrap();
            match event.as_str() {
                "chunk" => turn.chunks.push(v["text"].as_str().unwrap().to_owned()),
                "error" => turn.error = Some(v),
                "done" => turn.done = Some(v),
                other => panic!("unexpected event {other}"),
            }
        }
        Ok(turn)
    }

    pub async fn conversation(&self, token: &str, id: &str) -> Value {
        let resp = self.get(token, &format!("/api/conversations/{id}")).await;
        assert_eq!(resp.status(), 200);
        resp.json().await.unwrap()
    }
}

pub fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}
