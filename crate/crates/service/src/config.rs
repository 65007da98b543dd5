use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use motionplan_core::evalkit::Metric;
use motionplan_core::reason::ReasonConfig;
use motionplan_core::vlm::HttpVlmConfig;
use serde::{Deserialize, Serialize};

pub const ENV_BIND: &str = "MOTIONPLAN_BIND";
pub const ENV_BENCH_ROOT: &str = "MOTIONPLAN_BENCH_ROOT";
pub const ENV_DATA_DIR: &str = "MOTIONPLAN_DATA_DIR";
pub const ENV_STATIC_DIR: &str = "MOTIONPLAN_STATIC_DIR";
pub const ENV_VIDEOS_DIR: &str = "MOTIONPLAN_VIDEOS_DIR";
pub const ENV_GENERATOR_ENDPOINT: &str = "MOTIONPLAN_GENERATOR_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Method whose videos are stored as side A.
    pub candidate: String,
    pub baselines: Vec<String>,
    pub metrics: Vec<Metric>,
    pub pairs_per_session: usize,
    /// Generated videos as `<videos_dir>/<method>/<item_id>/*.png`.
    pub videos_dir: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            candidate: "candidate".into(),
            baselines: vec!["baseline_1".into(), "baseline_2".into()],
            metrics: vec![Metric::Overall],
            pairs_per_session: 30,
            videos_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub bench_root: PathBuf,
    /// Annotation revisions, study sessions and the verdict log live here.
    pub data_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub study: StudyConfig,
    /// Reasoning jobs allowed to run at once.
    pub workers: usize,
    pub max_rounds: usize,
    pub reason: ReasonConfig,
    pub vlm: Option<HttpVlmConfig>,
    pub generator_endpoint: Option<String>,
    pub generator_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".parse().unwrap(),
            bench_root: PathBuf::from("fixtures/bench_reference"),
            data_dir: PathBuf::from("data"),
            static_dir: None,
            study: StudyConfig::default(),
            workers: 2,
            max_rounds: 3,
            reason: ReasonConfig::default(),
            vlm: None,
            generator_endpoint: None,
            generator_timeout_secs: 600,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    /// Defaults, then the JSON file if given, then environment variables.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| ConfigError::Read {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                serde_json::from_slice(&bytes).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get(ENV_BIND) {
            self.bind = v
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{ENV_BIND}: {e}")))?;
        }
        if let Some(v) = get(ENV_BENCH_ROOT) {
            self.bench_root = v.into();
        }
        if let Some(v) = get(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
        if let Some(v) = get(ENV_STATIC_DIR) {
            self.static_dir = Some(v.into());
        }
        if let Some(v) = get(ENV_VIDEOS_DIR) {
            self.study.videos_dir = Some(v.into());
        }
        if let Some(v) = get(ENV_GENERATOR_ENDPOINT) {
            self.generator_endpoint = Some(v);
        }
        if let Some(endpoint) = get(motionplan_core::vlm::ENV_ENDPOINT) {
            let base = self.vlm.take().unwrap_or(HttpVlmConfig {
                endpoint: String::new(),
                token: None,
                model: None,
                timeout_secs: 120,
            });
            self.vlm = Some(HttpVlmConfig {
                endpoint,
                token: get(motionplan_core::vlm::ENV_TOKEN).or(base.token),
                model: get(motionplan_core::vlm::ENV_MODEL).or(base.model),
                timeout_secs: get(motionplan_core::vlm::ENV_TIMEOUT_SECS)
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(base.timeout_secs),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.max_rounds == 0 {
            return Err(ConfigError::Invalid("max_rounds must be at least 1".into()));
        }
        if self.study.baselines.is_empty() || self.study.metrics.is_empty() {
            return Err(ConfigError::Invalid(
                "study needs at least one baseline and one metric".into(),
            ));
        }
        if self.study.pairs_per_session == 0 {
            return Err(ConfigError::Invalid(
                "pairs_per_session must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
