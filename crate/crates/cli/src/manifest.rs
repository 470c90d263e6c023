use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliResult, Failure};

/// Record of one invocation, written beside its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub tool_version: &'static str,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub config: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(subcommand: &'static str, config: Value) -> Self {
        Self {
            subcommand,
            tool_version: env!("CARGO_PKG_VERSION"),
            started_at: now(),
            finished_at: None,
            config,
            summary: Value::Null,
            outputs: Vec::new(),
            exit_code: 0,
        }
    }

    /// Writes `bytes` atomically and records the path as an output.
    pub fn emit(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        sdr_cir::fsutil::write_atomic(path, bytes).map_err(|e| Failure::io(path, e))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn finish(mut self, path: &Path, exit_code: i32) -> CliResult<()> {
        self.finished_at = Some(now());
        self.exit_code = exit_code;
        let mut text = serde_json::to_string_pretty(&self).expect("manifests serialize");
        text.push('\n');
        sdr_cir::fsutil::write_atomic(path, text.as_bytes()).map_err(|e| Failure::io(path, e))
    }
}

/// `out.jsonl` -> `out.jsonl.manifest.json`.
pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}
