//! Engine configuration: resampling step, seed, parallelism, behavior model
//! location and the crash and conflict thresholds.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::ConflictThresholds;
use crate::crash::CrashConfig;
use crate::scene::DEFAULT_DT_S;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub dt_s: f64,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
    /// Behavior model file. `None` selects the bundled placeholder model.
    pub behavior_model: Option<PathBuf>,
    pub crash: CrashConfig,
    pub conflict: ConflictThresholds,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dt_s: DEFAULT_DT_S,
            seed: 0,
            jobs: 0,
            behavior_model: None,
            crash: CrashConfig::default(),
            conflict: ConflictThresholds::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot parse JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config is not valid UTF-8")]
    Encoding,
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt_s.is_finite() && self.dt_s > 0.0 && self.dt_s <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "dt_s must lie in (0, 1], got {}",
                self.dt_s
            )));
        }
        self.crash.validate().map_err(ConfigError::Invalid)?;
        self.conflict.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }
}

/// Parses TOML, or JSON when the first non-blank character is `{`.
pub fn load_engine_config(bytes: &[u8]) -> Result<EngineConfig, ConfigError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ConfigError::Encoding)?;
    let cfg: EngineConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text)?
    } else {
        toml::from_str(text)?
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(load_engine_config(b"").unwrap(), EngineConfig::default());
        assert_eq!(load_engine_config(b"{}").unwrap(), EngineConfig::default());
    }

    #[test]
    fn overrides_and_rejections() {
        let cfg = load_engine_config(b"dt_s = 0.01\nseed = 7\n[crash]\nrestitution = 0.2\n").unwrap();
        assert_eq!(cfg.dt_s, 0.01);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.crash.restitution, 0.2);
        assert!(matches!(load_engine_config(b"bogus = 1"), Err(ConfigError::Toml(_))));
        assert!(matches!(load_engine_config(b"dt_s = 0.0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            load_engine_config(b"[crash]\nrestitution = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
