//! Run manifests: what was read, what was written, and SHA-256 of each.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Input path → hash.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the output directory) → hash.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Collects the files a command writes into its output directory.
#[derive(Debug)]
pub struct RunRecorder {
    dir: PathBuf,
    command: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl RunRecorder {
    pub fn new(dir: &Path, command: &str, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Path for a new output file; the file is hashed when the run finishes.
    /// Sidecars of `.r32` payloads are recorded as well.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        if let Some(stem) = name.strip_suffix(".r32") {
            self.outputs.push(format!("{stem}.json"));
        }
        self.dir.join(name)
    }

    pub fn finish(self) -> Result<Manifest> {
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), sha256_file(&self.dir.join(name))?);
        }
        let manifest = Manifest {
            tool: "phasebeam".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            seed: self.seed,
            inputs: self.inputs,
            outputs,
        };
        phasebeam::io::write_report(&manifest, &self.dir.join(MANIFEST_NAME))?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes_outputs_and_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = RunRecorder::new(dir.path(), "test", Some(3)).unwrap();
        fs::write(rec.output("a.r32"), b"abc").unwrap();
        fs::write(dir.path().join("a.json"), b"{}").unwrap();
        let m = rec.finish().unwrap();
        assert_eq!(
            m.outputs["a.r32"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(m.outputs.contains_key("a.json"));
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }
}
