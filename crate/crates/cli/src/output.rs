//! In-memory artifacts, the run manifest, and all-or-nothing writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A named output file held in memory until the command succeeds.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<S: Serialize>(name: &str, value: &S) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
        bytes.push(b'\n');
        Self {
            name: name.into(),
            bytes,
        }
    }

    pub fn csv(name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Self {
        let mut bytes = Vec::new();
        write(&mut bytes).expect("writing CSV to memory cannot fail");
        Self {
            name: name.into(),
            bytes,
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64, artifacts: &[Artifact]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash,
            seed,
            files: artifacts
                .iter()
                .map(|a| FileEntry {
                    name: a.name.clone(),
                    sha256: a.sha256(),
                    bytes: a.bytes.len(),
                })
                .collect(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("{}.manifest.json", command.replace(' ', "-"))
    }
}

/// Writes every artifact and the manifest; on any failure removes what was written.
pub fn write_outputs(dir: &Path, artifacts: &[Artifact], manifest: &RunManifest) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let manifest_artifact = Artifact::json(&RunManifest::file_name(&manifest.command), manifest);
    let mut written = Vec::new();
    for a in artifacts.iter().chain(std::iter::once(&manifest_artifact)) {
        let path = dir.join(&a.name);
        if let Err(e) = fs::write(&path, &a.bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_checksums() {
        let a = Artifact {
            name: "x.csv".into(),
            bytes: b"abc".to_vec(),
        };
        let m = RunManifest::new("gate design", "h".into(), 1, &[a]);
        assert_eq!(m.files[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(RunManifest::file_name(&m.command), "gate-design.manifest.json");
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let ok = Artifact {
            name: "a.json".into(),
            bytes: b"{}".to_vec(),
        };
        let bad = Artifact {
            name: "missing/sub/b.json".into(),
            bytes: b"{}".to_vec(),
        };
        let m = RunManifest::new("t", "h".into(), 0, &[ok.clone(), bad.clone()]);
        assert!(write_outputs(dir.path(), &[ok, bad], &m).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
