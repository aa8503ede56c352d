//! PESQ through an external command. No native implementation is provided.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsutil;

/// First float on stdout.
pub const DEFAULT_PATTERN: &str = r"([-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)";

/// Runs `command` with `{clean}` and `{degraded}` substituted and parses its stdout.
///
/// The template is split on whitespace and executed directly, without a shell.
#[derive(Debug)]
pub struct PesqAdapter {
    command: Option<Vec<String>>,
    pattern: Regex,
    cache: Mutex<HashMap<String, f64>>,
    hits: AtomicUsize,
    invocations: AtomicUsize,
}

impl PesqAdapter {
    pub fn new(command: Option<&str>, pattern: Option<&str>) -> Result<Self> {
        let command = match command.map(str::trim) {
            Some(c) if !c.is_empty() => Some(c.split_whitespace().map(String::from).collect()),
            _ => None,
        };
        let pattern = Regex::new(pattern.unwrap_or(DEFAULT_PATTERN))
            .map_err(|e| Error::InvalidInput(format!("pesq pattern: {e}")))?;
        if pattern.captures_len() < 2 {
            return Err(Error::InvalidInput("pesq pattern needs a capture group".into()));
        }
        Ok(Self {
            command,
            pattern,
            cache: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            invocations: AtomicUsize::new(0),
        })
    }

    pub fn unconfigured() -> Self {
        Self::new(None, None).expect("default pattern compiles")
    }

    pub fn is_configured(&self) -> bool {
        self.command.is_some()
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    /// External processes started so far.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::Relaxed)
    }

    fn key(clean: &Path, degraded: &Path) -> Result<String> {
        let mut h = Sha256::new();
        for p in [clean, degraded] {
            h.update(Sha256::digest(fsutil::read(p)?));
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Score a clean/degraded file pair. Results are cached by file content.
    pub fn score(&self, clean: &Path, degraded: &Path) -> Result<f64> {
        let template = self
            .command
            .as_ref()
            .ok_or_else(|| Error::PesqUnavailable("no pesq_command configured".into()))?;
        let key = Self::key(clean, degraded)?;
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        let args: Vec<String> = template
            .iter()
            .map(|a| {
                a.replace("{clean}", &clean.to_string_lossy())
                    .replace("{degraded}", &degraded.to_string_lossy())
            })
            .collect();
        self.invocations.fetch_add(1, Ordering::Relaxed);
        let out = Command::new(&args[0]).args(&args[1..]).output().map_err(|e| {
            if e.kind() == ErrorKind::NotFound {
                Error::PesqUnavailable(format!("`{}` not found", args[0]))
            } else {
                Error::Adapter(format!("spawning `{}`: {e}", args[0]))
            }
        })?;
        if !out.status.success() {
            return Err(Error::Adapter(format!(
                "`{}` exited with {}: {}",
                args[0],
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let value: f64 = self
            .pattern
            .captures(&stdout)
            .and_then(|c| c.get(1))
            .and_then(|m| m.as_str().parse().ok())
            .ok_or_else(|| Error::Adapter(format!("no score in output {:?}", stdout.trim())))?;
        self.cache.lock().expect("cache lock").insert(key, value);
        Ok(value)
    }
}
