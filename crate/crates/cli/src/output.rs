//! Output files and the run manifest.
//!
//! Every file opens with `#` lines naming the command, the config hash and
//! the effective config. Bodies hold no wall-clock data; run timestamps only
//! go to `manifest.json`.

use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: &'a str,
    started_at: String,
    finished_at: String,
    files: &'a [FileEntry],
}

pub struct OutputDir {
    dir: PathBuf,
    command: &'static str,
    header: String,
    hash: String,
    started: DateTime<Utc>,
    files: Vec<FileEntry>,
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputDir {
    pub fn create(dir: &Path, command: &'static str, cfg: &RunConfig) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let hash = cfg.hash();
        let mut header = format!(
            "# playdecay {} {command}\n# config sha256:{hash}\n",
            env!("CARGO_PKG_VERSION")
        );
        for line in cfg.to_toml().lines().filter(|l| !l.is_empty()) {
            header.push_str("# ");
            header.push_str(line);
            header.push('\n');
        }
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            command,
            header,
            hash,
            started: Utc::now(),
            files: Vec::new(),
        })
    }

    /// Writes `name` as the header followed by whatever `body` emits.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut Vec<u8>) -> playdecay::Result<()>,
    {
        let mut buf = self.header.clone().into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        std::fs::write(&path, &buf).map_err(|e| Failure::io(&path, e))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: buf.len(),
            sha256: hex(&buf),
        });
        Ok(())
    }

    pub fn finish(self) -> Result<(), Failure> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &self.hash,
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            files: &self.files,
        };
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Failure::io(&path, e))
    }
}
