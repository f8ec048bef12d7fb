// SPDX-License-Identifier: MIT OR Apache-2.0

//! Provenance record written next to every run's outputs.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFile {
    pub path: String,
    pub sha256: String,
}

impl HashedFile {
    pub fn new(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref();
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }

    pub fn matches(&self) -> io::Result<bool> {
        Ok(sha256_file(&self.path)? == self.sha256)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub model: HashedFile,
    pub tokenizer: HashedFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub languages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    pub datasets: Vec<HashedFile>,
    pub precision: String,
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(path, json + "\n")
    }

    pub fn read(path: impl AsRef<Path>) -> io::Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(io::Error::other)
    }

    /// Whether every recorded file still has its recorded hash.
    pub fn verify(&self) -> io::Result<bool> {
        for f in [&self.model, &self.tokenizer]
            .into_iter()
            .chain(&self.datasets)
        {
            if !f.matches()? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
