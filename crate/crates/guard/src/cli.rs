//! Helpers shared by the command-line tools.

use std::fs;
use std::io;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// First line of a password file, without its line ending.
pub fn read_password_file(path: &Path) -> io::Result<String> {
    let text = fs::read_to_string(path)?;
    let line = text.lines().next().unwrap_or("");
    Ok(line.to_string())
}

/// Prompts twice on the terminal and insists both entries match.
pub fn prompt_new_password(what: &str) -> io::Result<String> {
    let first = rpassword::prompt_password(format!("{what}: "))?;
    let second = rpassword::prompt_password(format!("Repeat {what}: "))?;
    if first != second {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "passwords do not match"));
    }
    Ok(first)
}

/// Logs to stderr, filtered by `RUST_LOG` (default `info`).
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(io::stderr).try_init();
}
