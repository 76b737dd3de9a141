//! `<output>.meta.json` files recording how each output was produced.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: &'static str,
    pub params: Value,
}

impl Invocation {
    pub fn new<P: Serialize>(command: &'static str, params: &P) -> Result<Self> {
        Ok(Self {
            command,
            params: serde_json::to_value(params).context("cannot serialize parameters")?,
        })
    }

    /// Writes the sidecar for `output`; `info` holds results specific to that file.
    pub fn record<I: Serialize>(&self, output: &Path, info: I) -> Result<()> {
        let body = Sidecar {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            output: output.file_name().and_then(|n| n.to_str()).unwrap_or_default(),
            params: &self.params,
            info,
        };
        let path = sidecar_path(output);
        let text = serde_json::to_string_pretty(&body)?;
        std::fs::write(&path, text).with_context(|| format!("{}: cannot write sidecar", path.display()))
    }
}

#[derive(Serialize)]
struct Sidecar<'a, I> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    output: &'a str,
    params: &'a Value,
    info: I,
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    output.with_file_name(name)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("{}: cannot create directory", dir.display()))
}

/// Creates the parent directory of an output file if needed.
pub fn ensure_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}
