//! Build manifest: sorted `key=value` lines, including a SHA-256 per
//! artifact under `hash.<file>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::parse_pairs;

pub const FILE_NAME: &str = "manifest.txt";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").unwrap();
    }
    Ok(hex)
}

impl Manifest {
    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Records the hash of `dir/name` under `hash.<name>`.
    pub fn hash_artifact(&mut self, dir: &Path, name: &str) -> Result<()> {
        let h = sha256_file(&dir.join(name))?;
        self.insert(format!("hash.{name}"), h);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text: String = self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            entries: parse_pairs(&text, &path.display().to_string())?
                .into_iter()
                .collect(),
        })
    }
}
