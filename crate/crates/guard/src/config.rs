//! `key=value` server configuration.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const DEFAULT_DATA_PORT: u16 = 7521;
pub const DEFAULT_ADMIN_PORT: u16 = 7522;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind: String,
    pub data_port: u16,
    pub admin_port: u16,
    pub state_dir: PathBuf,
    pub users_file: PathBuf,
    pub seed_sql: Option<PathBuf>,
    pub outbox_dir: PathBuf,
    pub console_socket: PathBuf,
    pub security_officer: String,
    /// Only used when initializing a fresh state directory.
    pub dictionary_views: Option<Vec<String>>,
}

impl ServerConfig {
    /// A config rooted at `state_dir`, with ephemeral ports on loopback.
    pub fn for_state_dir(state_dir: impl Into<PathBuf>, users_file: impl Into<PathBuf>) -> Self {
        let state_dir = state_dir.into();
        ServerConfig {
            bind: "127.0.0.1".into(),
            data_port: 0,
            admin_port: 0,
            outbox_dir: state_dir.join("outbox"),
            console_socket: state_dir.join("console.sock"),
            state_dir,
            users_file: users_file.into(),
            seed_sql: None,
            security_officer: "security-officer".into(),
            dictionary_views: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("config line {line}: {detail}")]
    Invalid { line: usize, detail: String },
    #[error("config is missing required key {0}")]
    Missing(&'static str),
}

pub fn load_config(path: &Path) -> Result<ServerConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses config text. Relative paths are resolved against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ServerConfig, ConfigError> {
    let mut bind = None;
    let mut data_port = None;
    let mut admin_port = None;
    let mut state_dir = None;
    let mut users_file = None;
    let mut seed_sql = None;
    let mut outbox_dir = None;
    let mut console_socket = None;
    let mut security_officer = None;
    let mut dictionary_views = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let invalid = |detail: String| ConfigError::Invalid { line, detail };
        let (key, value) = trimmed.split_once('=').ok_or_else(|| invalid("expected key=value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let path = || base.join(value);
        let port = || value.parse::<u16>().map_err(|_| invalid(format!("{key} must be a port number")));
        match key {
            "bind" => bind = Some(value.to_string()),
            "data_port" => data_port = Some(port()?),
            "admin_port" => admin_port = Some(port()?),
            "state_dir" => state_dir = Some(path()),
            "users_file" => users_file = Some(path()),
            "seed_sql" => seed_sql = (!value.is_empty()).then(path),
            "outbox_dir" => outbox_dir = Some(path()),
            "console_socket" => console_socket = Some(path()),
            "security_officer" => security_officer = Some(value.to_string()),
            "dictionary_views" => {
                dictionary_views = Some(
                    value.split(',').map(|v| v.trim().to_ascii_uppercase()).filter(|v| !v.is_empty()).collect(),
                )
            }
            other => return Err(invalid(format!("unknown key {other}"))),
        }
    }

    let state_dir: PathBuf = state_dir.ok_or(ConfigError::Missing("state_dir"))?;
    let mut cfg = ServerConfig::for_state_dir(state_dir, users_file.ok_or(ConfigError::Missing("users_file"))?);
    cfg.data_port = data_port.ok_or(ConfigError::Missing("data_port"))?;
    cfg.admin_port = admin_port.ok_or(ConfigError::Missing("admin_port"))?;
    if let Some(b) = bind {
        cfg.bind = b;
    }
    cfg.seed_sql = seed_sql;
    if let Some(o) = outbox_dir {
        cfg.outbox_dir = o;
    }
    if let Some(c) = console_socket {
        cfg.console_socket = c;
    }
    if let Some(s) = security_officer {
        cfg.security_officer = s;
    }
    cfg.dictionary_views = dictionary_views;
    Ok(cfg)
}
