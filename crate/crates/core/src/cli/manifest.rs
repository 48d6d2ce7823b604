use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{file_sha256, PipelineConfig};
use crate::error::{Error, Result};

/// Version stamped into every artifact the commands write.
pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(config: &PipelineConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config_hash: config.hash(),
            seed: config.seed,
        }
    }

    /// First line of every CSV artifact.
    pub fn csv_header(&self) -> String {
        format!("# flowsage v{} config_hash={} seed={}\n", self.format_version, self.config_hash, self.seed)
    }

    /// Wraps a serialisable document with a `provenance` key.
    pub fn json_document<T: Serialize>(&self, body: &T) -> Result<String> {
        let mut value = serde_json::to_value(body)?;
        match &mut value {
            Value::Object(map) => {
                map.insert("provenance".into(), serde_json::to_value(self)?);
            }
            other => {
                let inner = other.take();
                value = serde_json::json!({ "provenance": self, "data": inner });
            }
        }
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }
}

/// Checks a `# flowsage v<N> ...` header line if the text carries one.
pub fn check_csv_header(text: &str, path: &Path) -> Result<()> {
    let Some(rest) = text.lines().next().and_then(|l| l.strip_prefix("# flowsage v")) else {
        return Ok(());
    };
    let version = rest.split_whitespace().next().unwrap_or("");
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::format(path, format!("artifact format v{version}, this build reads v{FORMAT_VERSION}")));
    }
    Ok(())
}

/// Reads the provenance block of a JSON artifact and checks its version.
pub fn read_json_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let version = value.pointer("/provenance/format_version").and_then(Value::as_u64);
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::format(path, format!("artifact format {version:?}, this build reads v{FORMAT_VERSION}")));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
    /// Written by a run that did not finish.
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub artifacts: Vec<ArtifactRecord>,
    /// Full resolved configuration; enough to rerun the command.
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(path, format!("manifest format v{}, this build reads v{FORMAT_VERSION}", m.format_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Artifacts whose current bytes differ from the recorded hash.
    pub fn mismatches(&self, other: &Manifest) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for a in &self.artifacts {
            match other.artifacts.iter().find(|b| b.path == a.path) {
                Some(b) if b.sha256 == a.sha256 => {}
                _ => out.push(a.path.clone()),
            }
        }
        out.extend(
            other
                .artifacts
                .iter()
                .filter(|b| !self.artifacts.iter().any(|a| a.path == b.path))
                .map(|b| b.path.clone()),
        );
        out
    }
}

/// Collects the files one command writes and produces its manifest.
#[derive(Debug)]
pub struct Run {
    pub command: String,
    pub config: PipelineConfig,
    pub provenance: Provenance,
    written: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            provenance: Provenance::of(config),
            written: Vec::new(),
        }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_csv(&mut self, path: &Path, body: &[u8]) -> Result<()> {
        let mut bytes = self.provenance.csv_header().into_bytes();
        bytes.extend_from_slice(body);
        self.write(path, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, body: &T) -> Result<()> {
        let text = self.provenance.json_document(body)?;
        self.write(path, text.as_bytes())
    }

    /// Records an existing file that this command reused unchanged.
    pub fn reuse(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Hashes everything written so far and saves the manifest.
    pub fn finish(self, manifest_path: &Path, error: Option<&Error>) -> Result<Manifest> {
        let artifacts = self
            .written
            .iter()
            .map(|p| {
                Ok(ArtifactRecord {
                    path: p.clone(),
                    sha256: file_sha256(p)?,
                    stale: error.is_some(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            command: self.command,
            config_hash: self.provenance.config_hash,
            seed: self.provenance.seed,
            status: if error.is_some() { RunStatus::Failed } else { RunStatus::Complete },
            error: error.map(|e| e.to_string()),
            artifacts,
            config: self.config,
        };
        if let Some(dir) = manifest_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        manifest.save(manifest_path)?;
        Ok(manifest)
    }
}
