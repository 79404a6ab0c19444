//! Output directory handling and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kspec::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Writes files under one directory and remembers their names.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, Error> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: vec![],
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Error> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` listing every file, itself included.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf, Error> {
        self.written.push("manifest.json".into());
        manifest.outputs = self.written.clone();
        let json = to_json(&manifest);
        let path = self.dir.join("manifest.json");
        fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        Ok(self.dir)
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Fully resolved configuration, defaults materialised.
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: vec![],
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), Error> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }
}
