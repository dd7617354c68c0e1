use std::path::{Path, PathBuf};

use pivotrec_core::embedding::RemoteEmbedderConfig;
use pivotrec_core::recommend::RecommendConfig;
use pivotrec_core::semantics::RemoteConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {var}: {message}")]
    Env { var: &'static str, message: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheFileMode {
    #[default]
    Record,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    /// Remote oracle; the rule-based oracle answers when absent.
    pub oracle: Option<RemoteConfig>,
    /// Remote encoder; the baseline embedder answers when absent.
    pub embedding: Option<RemoteEmbedderConfig>,
    pub oracle_cache: Option<PathBuf>,
    pub cache_mode: CacheFileMode,
    /// Datasets and sessions are persisted here when set.
    pub data_dir: Option<PathBuf>,
    /// Starting point for every new session's config.
    pub session_defaults: RecommendConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            oracle: None,
            embedding: None,
            oracle_cache: None,
            cache_mode: CacheFileMode::Record,
            data_dir: None,
            session_defaults: RecommendConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigFileError> {
        toml::from_str(text).map_err(|e| ConfigFileError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// Applies `PIVOTREC_*` overrides read through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigFileError> {
        if let Some(listen) = var("PIVOTREC_LISTEN") {
            self.listen = listen;
        }
        if let Some(endpoint) = var("PIVOTREC_ORACLE_ENDPOINT") {
            match &mut self.oracle {
                Some(o) => o.endpoint = endpoint,
                None => self.oracle = Some(RemoteConfig::new(endpoint)),
            }
        }
        if let Some(token) = var("PIVOTREC_ORACLE_TOKEN") {
            if let Some(o) = &mut self.oracle {
                o.token = Some(token);
            }
        }
        if let Some(endpoint) = var("PIVOTREC_EMBEDDING_ENDPOINT") {
            match &mut self.embedding {
                Some(e) => e.endpoint = endpoint,
                None => {
                    self.embedding = Some(RemoteEmbedderConfig {
                        endpoint,
                        token: None,
                        timeout_ms: 10_000,
                        max_in_flight: 4,
                    })
                }
            }
        }
        if let Some(path) = var("PIVOTREC_ORACLE_CACHE") {
            self.oracle_cache = Some(path.into());
        }
        if let Some(mode) = var("PIVOTREC_CACHE_MODE") {
            self.cache_mode = match mode.as_str() {
                "record" => CacheFileMode::Record,
                "replay" => CacheFileMode::Replay,
                other => {
                    return Err(ConfigFileError::Env {
                        var: "PIVOTREC_CACHE_MODE",
                        message: format!("expected record or replay, got `{other}`"),
                    })
                }
            };
        }
        if let Some(dir) = var("PIVOTREC_DATA_DIR") {
            self.data_dir = Some(dir.into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn toml_then_env() {
        let text = r#"
            listen = "0.0.0.0:9000"
            data_dir = "/tmp/pivots"

            [oracle]
            endpoint = "http://localhost:1/llm"

            [session_defaults]
            k = 3
            theta = 0.4
        "#;
        let mut config = ServerConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(config.session_defaults.k, 3);
        assert_eq!(config.session_defaults.g_max, 3);
        assert_eq!(config.oracle.as_ref().unwrap().timeout_ms, 10_000);

        let env: HashMap<&str, &str> = [
            ("PIVOTREC_LISTEN", "127.0.0.1:1"),
            ("PIVOTREC_ORACLE_TOKEN", "secret"),
            ("PIVOTREC_CACHE_MODE", "replay"),
        ]
        .into();
        config.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(config.listen, "127.0.0.1:1");
        assert_eq!(config.oracle.unwrap().token.as_deref(), Some("secret"));
        assert_eq!(config.cache_mode, CacheFileMode::Replay);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_env() {
        assert!(ServerConfig::from_toml("lisen = 1", Path::new("x")).is_err());
        let mut config = ServerConfig::default();
        assert!(config
            .apply_env(|k| (k == "PIVOTREC_CACHE_MODE").then(|| "both".to_string()))
            .is_err());
    }
}
