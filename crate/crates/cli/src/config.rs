//! Client settings: built-in defaults, overridden by the config file, then
//! the environment, then command-line flags.
//!
//! The config file is TOML:
//!
//! ```toml
//! server_url = "http://127.0.0.1:8080"
//! poll_interval_ms = 250
//! timeout_ms = 60000
//! format = "table"
//! ```
//!
//! It is read from `--config`, else `$SMELLHUNTER_CONFIG`, else
//! `<config dir>/smellhunter/config.toml` if that exists.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";
pub const DEFAULT_POLL_MS: u64 = 250;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
pub const SERVER_ENV: &str = "SMELLHUNTER_SERVER";
pub const CONFIG_ENV: &str = "SMELLHUNTER_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliConfig {
    pub server_url: String,
    pub poll_interval_ms: u64,
    pub timeout_ms: u64,
    pub format: OutputFormat,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    server_url: Option<String>,
    poll_interval_ms: Option<u64>,
    timeout_ms: Option<u64>,
    format: Option<OutputFormat>,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub server: Option<String>,
    pub poll_interval_ms: Option<u64>,
    pub timeout_ms: Option<u64>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn read_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })
}

fn default_config_path() -> Option<PathBuf> {
    dirs::config_dir().map(|d| d.join("smellhunter").join("config.toml")).filter(|p| p.is_file())
}

impl CliConfig {
    pub fn resolve(overrides: &Overrides, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let explicit = overrides.config.clone().or_else(|| env(CONFIG_ENV).map(PathBuf::from));
        let file = match explicit.or_else(default_config_path) {
            Some(path) => read_file(&path)?,
            None => FileConfig::default(),
        };
        let config = CliConfig {
            server_url: overrides
                .server
                .clone()
                .or_else(|| env(SERVER_ENV))
                .or(file.server_url)
                .unwrap_or_else(|| DEFAULT_SERVER.into()),
            poll_interval_ms: overrides.poll_interval_ms.or(file.poll_interval_ms).unwrap_or(DEFAULT_POLL_MS),
            timeout_ms: overrides.timeout_ms.or(file.timeout_ms).unwrap_or(DEFAULT_TIMEOUT_MS),
            format: overrides.format.or(file.format).unwrap_or_default(),
        };
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.server_url.starts_with("http://") || self.server_url.starts_with("https://")) {
            return Err(ConfigError::Invalid(format!("server URL `{}` must start with http:// or https://", self.server_url)));
        }
        if self.poll_interval_ms == 0 || self.timeout_ms == 0 {
            return Err(ConfigError::Invalid("poll interval and timeout must be positive".into()));
        }
        if self.poll_interval_ms >= self.timeout_ms {
            return Err(ConfigError::Invalid(format!(
                "poll interval ({} ms) must be shorter than the timeout ({} ms)",
                self.poll_interval_ms, self.timeout_ms
            )));
        }
        Ok(())
    }

    pub fn endpoint(&self, path: &str) -> String {
        format!("{}{path}", self.server_url.trim_end_matches('/'))
    }
}
