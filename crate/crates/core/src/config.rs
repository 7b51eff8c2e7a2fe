//! Application configuration, read from TOML.
//!
//! Every field has a default, so an empty file (or no file) yields a
//! mock-backed setup under `./purrfessor-data`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendRegistry, ChatBackend, MockBackend, MockScript, OpenAiCompatBackend, RemoteBackendConfig};
use crate::domain::BackendId;
use crate::seed::{SeedTree, DEFAULT_SEED};
use crate::store::{StoreConfig, DEFAULT_MAX_IMAGE_BYTES};

pub const DEFAULT_HISTORY_WINDOW: usize = 10;
pub const DEFAULT_SESSION_IDLE_HOURS: u64 = 24;
pub const DEFAULT_PORT: u16 = 8080;
pub const ADMIN_TOKEN_ENV: &str = "PURRFESSOR_ADMIN_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock,
    OpenaiCompat(RemoteBackendConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSettings {
    pub latency_ms: u64,
    pub chunk_delay_ms: u64,
    pub chunk_chars: usize,
    pub vision: bool,
    /// JSON-lines reply script.
    pub script: Option<PathBuf>,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings { latency_ms: 0, chunk_delay_ms: 0, chunk_chars: 16, vision: true, script: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreSettings {
    pub data_dir: PathBuf,
    pub blob_dir: PathBuf,
    pub fsync_on_append: bool,
    pub max_image_bytes: u64,
}

impl Default for StoreSettings {
    fn default() -> Self {
        StoreSettings {
            data_dir: PathBuf::from("purrfessor-data/data"),
            blob_dir: PathBuf::from("purrfessor-data/blobs"),
            fsync_on_append: true,
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub port: u16,
    /// Prior turns sent with each request; 1 means only the new message.
    pub history_window: usize,
    pub session_idle_hours: u64,
    pub backend_timeout_ms: u64,
    /// Reviewed training examples served by the dataset export endpoint.
    pub dataset_examples: Option<PathBuf>,
    /// Replaces the built-in suggestions, tooltips and walkthrough.
    pub ui: Option<PathBuf>,
    /// Built web client, served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            port: DEFAULT_PORT,
            history_window: DEFAULT_HISTORY_WINDOW,
            session_idle_hours: DEFAULT_SESSION_IDLE_HOURS,
            backend_timeout_ms: crate::backends::DEFAULT_TIMEOUT_MS,
            dataset_examples: None,
            ui: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub seed: u64,
    pub store: StoreSettings,
    pub gateway: GatewaySettings,
    pub mock: MockSettings,
    /// Keyed by backend id (`gpt4_api`, `llava_raw`, `llava_finetuned`).
    /// Unlisted ids fall back to the mock.
    pub backends: BTreeMap<String, BackendSpec>,
    /// Study definition; the bundled one when absent.
    pub study: Option<PathBuf>,
    /// Food lexicon; the bundled one when absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: DEFAULT_SEED,
            store: StoreSettings::default(),
            gateway: GatewaySettings::default(),
            mock: MockSettings::default(),
            backends: BTreeMap::new(),
            study: None,
            lexicon: None,
        }
    }
}

impl AppConfig {
    /// Parses `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: AppConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for key in self.backends.keys() {
            let id: BackendId = key.parse().map_err(|_| ConfigError::Invalid(format!("unknown backend {key:?}")))?;
            if id == BackendId::Mock {
                return Err(ConfigError::Invalid("the mock backend is configured under [mock]".into()));
            }
        }
        if self.gateway.history_window == 0 {
            return Err(ConfigError::Invalid("gateway.history_window must be at least 1".into()));
        }
        if self.gateway.session_idle_hours == 0 {
            return Err(ConfigError::Invalid("gateway.session_idle_hours must be at least 1".into()));
        }
        Ok(())
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.store.data_dir);
        fix(&mut self.store.blob_dir);
        for p in [
            &mut self.mock.script,
            &mut self.gateway.dataset_examples,
            &mut self.gateway.ui,
            &mut self.gateway.static_dir,
            &mut self.study,
            &mut self.lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            data_dir: self.store.data_dir.clone(),
            blob_dir: self.store.blob_dir.clone(),
            fsync_on_append: self.store.fsync_on_append,
            max_image_bytes: self.store.max_image_bytes,
        }
    }

    pub fn session_idle(&self) -> Duration {
        Duration::from_secs(self.gateway.session_idle_hours * 3600)
    }

    pub fn mock_backend(&self) -> Result<MockBackend, ConfigError> {
        let m = &self.mock;
        let mut mock = MockBackend::new(SeedTree::new(self.seed).child("mock").value())
            .with_latency(Duration::from_millis(m.latency_ms))
            .with_chunk_delay(Duration::from_millis(m.chunk_delay_ms))
            .with_chunk_chars(m.chunk_chars)
            .with_vision(m.vision);
        if let Some(path) = &m.script {
            let script =
                MockScript::load(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            mock = mock.with_script(script);
        }
        Ok(mock)
    }

    /// Every backend id resolved to its configured adapter.
    pub fn registry(&self) -> Result<BackendRegistry, ConfigError> {
        let mut reg = BackendRegistry::all_mock(self.mock_backend()?);
        for (key, spec) in &self.backends {
            let id: BackendId = key.parse().map_err(|_| ConfigError::Invalid(format!("unknown backend {key:?}")))?;
            if let BackendSpec::OpenaiCompat(remote) = spec {
                let backend: Arc<dyn ChatBackend> = Arc::new(OpenAiCompatBackend::new(id, remote.clone()));
                reg.insert(id, backend);
            }
        }
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = AppConfig::parse("").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.gateway.history_window, 10);
        assert_eq!(cfg.session_idle(), Duration::from_secs(86_400));
    }

    #[test]
    fn remote_backend_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("app.toml");
        std::fs::write(
            &path,
            r#"
seed = 7
[store]
data_dir = "d"
[gateway]
history_window = 1
[backends.llava_finetuned]
kind = "openai_compat"
base_url = "http://localhost:9000/v1"
model = "llava"
vision = true
"#,
        )
        .unwrap();
        let cfg = AppConfig::load(&path).unwrap();
        assert_eq!(cfg.store.data_dir, dir.path().join("d"));
        assert_eq!(cfg.gateway.history_window, 1);
        let reg = cfg.registry().unwrap();
        assert_eq!(reg.get(BackendId::LlavaFinetuned).unwrap().id(), BackendId::LlavaFinetuned);
        assert_eq!(reg.get(BackendId::Gpt4Api).unwrap().id(), BackendId::Mock);
    }

    #[test]
    fn rejects_unknown_backend_and_zero_window() {
        assert!(AppConfig::parse("[backends.gpt5]\nkind = \"mock\"").is_err());
        assert!(AppConfig::parse("[gateway]\nhistory_window = 0").is_err());
    }
}
