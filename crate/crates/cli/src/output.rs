use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Provenance shared by every file of one invocation. No timestamps, so
/// reruns produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub library: &'static str,
    pub library_version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Provenance {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            library: "deltashell",
            library_version: deltashell::VERSION,
            command: command.to_string(),
            config_sha256: config_hash(config),
            config: config.clone(),
        }
    }
}

/// SHA-256 of the config in its canonical JSON form.
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes to JSON");
    hex::encode(Sha256::digest(canonical))
}

/// Writes the files of one command into the output directory and keeps the
/// list for the summary printed at the end.
pub struct Sink {
    dir: PathBuf,
    pub format: Format,
    provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format, provenance: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            format,
            provenance,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// CSV produced by `write`, plus `<name>.meta.json` with the provenance
    /// (the CSV itself keeps its plain schema).
    pub fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> deltashell::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.write_bytes(name, &buf)?;
        let meta = json!({ "file": name, "provenance": self.provenance });
        self.write_bytes(&format!("{name}.meta.json"), &pretty(&meta))
    }

    /// JSON document `{ "provenance": ..., "result": value }`.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let doc = json!({ "provenance": self.provenance, "result": value });
        self.write_bytes(name, &pretty(&doc))
    }

    /// Plain text with a provenance sidecar, like [`Sink::csv`].
    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write_bytes(name, text.as_bytes())?;
        let meta = json!({ "file": name, "provenance": self.provenance });
        self.write_bytes(&format!("{name}.meta.json"), &pretty(&meta))
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON value serializes");
    out.push(b'\n');
    out
}

/// File-name fragment for a λ value, e.g. `lambda3.6`.
pub fn lambda_tag(lambda: f64) -> String {
    format!("lambda{lambda}")
}
