use std::path::Path;

use motionplan_core::degrade::DegradeConfig;
use motionplan_core::evalkit::TrackerConfig;
use motionplan_core::overlay::OverlayStyle;
use motionplan_core::vlm::{self, HttpVlmConfig};
use motionplan_core::volume::SigmaConfig;
use motionplan_service::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ENV_SEED: &str = "MOTIONPLAN_SEED";

/// Settings shared by all subcommands: defaults, then the config file, then
/// environment variables, then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub sigma: SigmaConfig,
    pub degrade: DegradeConfig,
    pub style: OverlayStyle,
    pub tracker: TrackerConfig,
    pub dot_radius: f64,
    pub max_rounds: usize,
    pub vlm: Option<HttpVlmConfig>,
    pub generator_endpoint: Option<String>,
    pub generator_timeout_secs: u64,
    pub service: ServiceConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: 0,
            sigma: SigmaConfig::default(),
            degrade: DegradeConfig::default(),
            style: OverlayStyle::default(),
            tracker: TrackerConfig::default(),
            dot_radius: 3.0,
            max_rounds: 3,
            vlm: None,
            generator_endpoint: None,
            generator_timeout_secs: 600,
            service: ServiceConfig::default(),
        }
    }
}

impl CliConfig {
    /// Parses TOML when the file name ends in `.toml`, JSON otherwise.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let parsed = if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn resolve(
        path: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        seed_flag: Option<u64>,
    ) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => CliConfig::from_file(p)?,
            None => CliConfig::default(),
        };
        if let Some(v) = env(ENV_SEED) {
            cfg.seed = v
                .parse()
                .map_err(|e| CliError::Usage(format!("{ENV_SEED}: {e}")))?;
        }
        if let Some(endpoint) = env(vlm::ENV_ENDPOINT) {
            let base = cfg.vlm.take();
            cfg.vlm = Some(HttpVlmConfig {
                endpoint,
                token: env(vlm::ENV_TOKEN).or_else(|| base.as_ref().and_then(|b| b.token.clone())),
                model: env(vlm::ENV_MODEL).or_else(|| base.as_ref().and_then(|b| b.model.clone())),
                timeout_secs: env(vlm::ENV_TIMEOUT_SECS)
                    .and_then(|v| v.parse().ok())
                    .or(base.map(|b| b.timeout_secs))
                    .unwrap_or(120),
            });
        }
        if let Some(v) = env(motionplan_service::config::ENV_GENERATOR_ENDPOINT) {
            cfg.generator_endpoint = Some(v);
        }
        cfg.service
            .apply_env(&env)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(seed) = seed_flag {
            cfg.seed = seed;
        }
        cfg.sigma.validate().map_err(CliError::invalid)?;
        cfg.degrade.validate().map_err(CliError::invalid)?;
        cfg.style.validate().map_err(CliError::invalid)?;
        Ok(cfg)
    }
}
