//! Atomic file output with one manifest per file.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::materials::MaterialDb;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct MaterialHash {
    pub id: String,
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputHash {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to every output file as `<file>.manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub materials: Vec<MaterialHash>,
    pub inputs: Vec<InputHash>,
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
    pub output: OutputHash,
}

/// Shared context for one command invocation.
pub struct OutputSink {
    pub dir: PathBuf,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub materials: Vec<MaterialHash>,
    pub inputs: Vec<InputHash>,
    pub written: Vec<PathBuf>,
}

impl OutputSink {
    pub fn new(
        dir: &Path,
        command: &str,
        config: serde_json::Value,
        seed: u64,
        db: &MaterialDb,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut materials: Vec<MaterialHash> = db
            .tables()
            .map(|t| MaterialHash {
                id: t.id().to_string(),
                source: t.source().to_string(),
                sha256: t.sha256().to_string(),
            })
            .collect();
        materials.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            config,
            seed,
            materials,
            inputs: Vec::new(),
            written: Vec::new(),
        })
    }

    /// Records the hash of an input file in subsequent manifests.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes `name` and its manifest atomically.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        let manifest = RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            materials: self.materials.clone(),
            inputs: self.inputs.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            output: OutputHash {
                file: name.to_string(),
                sha256: sha256_hex(contents),
            },
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        write_atomic(
            &self.dir.join(format!("{name}.manifest.json")),
            json.as_bytes(),
        )?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Writes to a temporary file in the target directory, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hash_matches_output() {
        let dir = tempfile::tempdir().unwrap();
        let db = MaterialDb::bundled();
        let mut sink =
            OutputSink::new(dir.path(), "test", serde_json::json!({"a": 1}), 7, &db).unwrap();
        sink.write("x.csv", b"a,b\n1,2\n").unwrap();
        let m: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("x.csv.manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(m["output"]["sha256"], sha256_hex(b"a,b\n1,2\n"));
        assert_eq!(m["seed"], 7);
        assert!(m["materials"]
            .as_array()
            .unwrap()
            .iter()
            .any(|t| t["id"] == "NbN"));
    }
}
