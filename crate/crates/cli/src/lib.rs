//! Command-line front end: configuration, batch runs, analysis outputs.
//!
//! Exit codes: 0 ok, 1 I/O, 2 configuration, 3 construction, 4 analysis.

pub mod config;
pub mod run;
pub mod svg;
pub mod tools;

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn io(m: impl Into<String>) -> Self {
        Self { code: 1, message: m.into() }
    }

    pub fn config(m: impl Into<String>) -> Self {
        Self { code: 2, message: m.into() }
    }

    pub fn construction(m: impl Into<String>) -> Self {
        Self { code: 3, message: m.into() }
    }

    pub fn analysis(m: impl Into<String>) -> Self {
        Self { code: 4, message: m.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.code {
            2 => "config error",
            3 => "construction error",
            4 => "analysis error",
            _ => "error",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(bytes))
}

/// Worker count: explicit value, else `HYPERSCOPE_WORKERS`, else all cores.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize, CliError> {
    if let Some(w) = explicit {
        return if w == 0 {
            Err(CliError::config("workers must be at least 1"))
        } else {
            Ok(w)
        };
    }
    match std::env::var("HYPERSCOPE_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(CliError::config(format!("HYPERSCOPE_WORKERS={v} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Run `f` on a dedicated pool of `workers` threads.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::io(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
