//! Run-directory layout and write-once artifact units.
//!
//! A unit is a directory plus a `<stage>.done.json` listing the SHA-256 of
//! every file it wrote. A unit counts as complete only while every listed
//! file still matches; incomplete units are rewritten from scratch.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use segeval_core::splits::SplitMethod;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn setting(&self, setting: &str) -> PathBuf {
        self.root.join("runs").join(setting)
    }

    pub fn dataset(&self, setting: &str, d: usize) -> PathBuf {
        self.setting(setting).join("datasets").join(d.to_string())
    }

    /// Relative to the dataset directory.
    pub fn split_rel(method: SplitMethod, r: usize) -> PathBuf {
        PathBuf::from("splits").join(method.to_string()).join(r.to_string())
    }

    pub fn split(&self, setting: &str, d: usize, method: SplitMethod, r: usize) -> PathBuf {
        self.dataset(setting, d).join(Self::split_rel(method, r))
    }

    pub fn job(&self, setting: &str, model: &str, d: usize, r: usize) -> PathBuf {
        self.setting(setting).join("jobs").join(model).join(d.to_string()).join(r.to_string())
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis.json")
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes via a temporary sibling and a rename.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn done_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(format!("{stage}.done.json"))
}

/// True when the unit's checksum record exists and every file matches it.
pub fn unit_complete(dir: &Path, stage: &str) -> bool {
    let Ok(text) = fs::read_to_string(done_path(dir, stage)) else {
        return false;
    };
    let Ok(sums) = serde_json::from_str::<BTreeMap<String, String>>(&text) else {
        return false;
    };
    sums.iter().all(|(name, sum)| {
        fs::read(dir.join(name)).is_ok_and(|bytes| &sha256_hex(&bytes) == sum)
    })
}

/// Writes the files (paths relative to `dir`), then the checksum record.
pub fn write_unit(dir: &Path, stage: &str, files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    let done = done_path(dir, stage);
    if done.exists() {
        fs::remove_file(&done).map_err(|e| io_err(&done, e))?;
    }
    let mut sums = BTreeMap::new();
    for (rel, bytes) in files {
        write_file(&dir.join(rel), bytes)?;
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        sums.insert(key, sha256_hex(bytes));
    }
    write_file(&done, &to_json(&sums))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_detects_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("u");
        assert!(!unit_complete(&dir, "s"));
        write_unit(&dir, "s", &[("a.txt".into(), b"x".to_vec()), ("b/c.txt".into(), b"y".to_vec())]).unwrap();
        assert!(unit_complete(&dir, "s"));
        fs::write(dir.join("b/c.txt"), b"z").unwrap();
        assert!(!unit_complete(&dir, "s"));
        fs::remove_file(dir.join("b/c.txt")).unwrap();
        assert!(!unit_complete(&dir, "s"));
    }
}
