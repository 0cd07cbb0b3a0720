//! Service configuration: a TOML file plus environment overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Overrides `artifact_dir` when set.
pub const ARTIFACT_DIR_ENV: &str = "CLUSTER_SHAPLEY_ARTIFACT_DIR";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub artifact_dir: PathBuf,
    /// Coalitions per explained row; unset means the library default.
    pub budget: Option<usize>,
    pub background: usize,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            artifact_dir: PathBuf::from("artifacts"),
            budget: None,
            background: 100,
            seed: 42,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(PathBuf, toml::de::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            ConfigError::Parse(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path` if given, then applies the environment override.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(p.into(), e))?;
                Self::from_toml(&text).map_err(|e| ConfigError::Parse(p.into(), e))?
            }
            None => Self::default(),
        };
        if let Some(dir) = std::env::var_os(ARTIFACT_DIR_ENV) {
            cfg.artifact_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ServiceConfig::from_toml("bind = \"0.0.0.0:9000\"\nbudget = 512\n").unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.budget, Some(512));
        assert_eq!(cfg.background, 100);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServiceConfig::from_toml("bnid = \"x\"").is_err());
    }
}
