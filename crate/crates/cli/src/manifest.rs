use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use flashcards_core::io::sha256_file;
use flashcards_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the run directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to reproduce and audit one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration after flag overrides.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Command-specific headline numbers.
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        let versions = BTreeMap::from([
            ("flashcards-core".to_string(), flashcards_core::VERSION.to_string()),
            ("flashcards-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            versions,
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            summary: serde_json::Value::Null,
        }
    }

    /// Records `file` (inside `dir`) with its current hash.
    pub fn add_output(&mut self, dir: &Path, file: &Path) -> Result<()> {
        let rel = file.strip_prefix(dir).unwrap_or(file).to_path_buf();
        let bytes = std::fs::metadata(file).map_err(|e| io_err(file, e))?.len();
        self.outputs.push(OutputFile { path: rel, sha256: sha256_file(file)?, bytes });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Corrupt { path, reason: e.to_string() })
    }

    /// Checks that every recorded output exists in `dir` with the recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let p = dir.join(&out.path);
            let hash = sha256_file(&p)?;
            if hash != out.sha256 {
                return Err(Error::Corrupt { path: p, reason: format!("sha256 {hash} does not match manifest {}", out.sha256) });
            }
        }
        Ok(())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}
