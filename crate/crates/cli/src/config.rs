//! Layered run configuration: built-in defaults, overridden by an optional
//! TOML file, overridden by CLI flags. The effective config travels with
//! every artifact so a run can be reproduced from the artifact alone;
//! timestamps live in a separate sidecar so artifacts stay byte-stable.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use omnirag_core::episode::EpisodeConfig;
use omnirag_core::grpo::GrpoConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config at {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("api key environment variable {name} is not set")]
    MissingApiKey { name: String },
}

/// An HTTP backend endpoint. The API key is named by environment variable
/// only; neither flags nor config files ever carry the secret itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpEndpoint {
            url: url.into(),
            model: model.into(),
            api_key_env: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    /// Resolves the API key from the environment, if an env var is named.
    pub fn api_key(&self) -> Result<Option<String>, ConfigError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(name) => std::env::var(name)
                .map(Some)
                .map_err(|_| ConfigError::MissingApiKey { name: name.clone() }),
        }
    }
}

/// The effective configuration a command runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub seed: u64,
    /// Worker-pool width for fan-out commands (`eval`, `sim`).
    pub workers: usize,
    pub sampling_interval_s: f64,
    pub segment_len_s: f64,
    /// Embedding dimension expected from backends.
    pub embed_dimension: usize,
    pub episode: EpisodeConfig,
    pub grpo: GrpoConfig,
    /// HTTP embedding service; absent means the deterministic offline backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_backend: Option<HttpEndpoint>,
    /// HTTP chat service backing `chat:` policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat_backend: Option<HttpEndpoint>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            workers: 4,
            sampling_interval_s: 10.0,
            segment_len_s: 10.0,
            embed_dimension: 64,
            episode: EpisodeConfig::inference(),
            grpo: GrpoConfig::default(),
            embed_backend: None,
            chat_backend: None,
        }
    }
}

/// The file overlay: every field optional, unset fields keep the layer below.
#[derive(Debug, Default, Clone, Deserialize)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub sampling_interval_s: Option<f64>,
    pub segment_len_s: Option<f64>,
    pub embed_dimension: Option<usize>,
    pub episode: Option<EpisodeConfig>,
    pub grpo: Option<GrpoConfig>,
    pub embed_backend: Option<HttpEndpoint>,
    pub chat_backend: Option<HttpEndpoint>,
}

impl ConfigFile {
    pub fn apply(self, base: &mut Config) {
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = self.workers {
            base.workers = v;
        }
        if let Some(v) = self.sampling_interval_s {
            base.sampling_interval_s = v;
        }
        if let Some(v) = self.segment_len_s {
            base.segment_len_s = v;
        }
        if let Some(v) = self.embed_dimension {
            base.embed_dimension = v;
        }
        if let Some(v) = self.episode {
            base.episode = v;
        }
        if let Some(v) = self.grpo {
            base.grpo = v;
        }
        if let Some(v) = self.embed_backend {
            base.embed_backend = Some(v);
        }
        if let Some(v) = self.chat_backend {
            base.chat_backend = Some(v);
        }
    }
}

/// Loads defaults, then the TOML file overlay if a path is given. Flag
/// overrides are applied by the caller on top of the result.
pub fn load_config(path: Option<&Path>) -> Result<Config, ConfigError> {
    let mut config = Config::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let overlay: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Malformed {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        overlay.apply(&mut config);
    }
    Ok(config)
}

/// Writes the effective config next to an artifact (`<artifact>.config.json`)
/// and the wall-clock timestamp into a separate sidecar
/// (`<artifact>.sidecar.json`), keeping the artifact itself byte-stable.
pub fn write_artifact_metadata(artifact: &Path, config: &Config) -> Result<(), ConfigError> {
    let config_path = sibling(artifact, "config.json");
    fs::write(
        &config_path,
        serde_json::to_string_pretty(config).expect("config serializes"),
    )
    .map_err(|source| ConfigError::Io { path: config_path.display().to_string(), source })?;

    let created_at_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let sidecar_path = sibling(artifact, "sidecar.json");
    let sidecar = serde_json::json!({ "created_at_unix_s": created_at_unix_s });
    fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))
        .map_err(|source| ConfigError::Io { path: sidecar_path.display().to_string(), source })
}

fn sibling(artifact: &Path, suffix: &str) -> PathBuf {
    let name = artifact
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".to_string());
    artifact.with_file_name(format!("{name}.{suffix}"))
}
